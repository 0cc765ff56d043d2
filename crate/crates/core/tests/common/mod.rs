//! Enumeration oracles shared by the integration suites. These walk every
//! (v, h) configuration directly from the energy definition and stay
//! independent of the free-energy code paths they check.

use nodesep::numerics::{Matrix, Rng};
use nodesep::rbm::{binary_patterns, RbmParams};

pub fn random_params(n_visible: usize, n_hidden: usize, rng: &mut Rng) -> RbmParams {
    RbmParams {
        weights: Matrix::from_fn(n_visible, n_hidden, |_, _| rng.gaussian(0.8)),
        visible_bias: Matrix::from_fn(1, n_visible, |_, _| rng.gaussian(0.5)),
        hidden_bias: Matrix::from_fn(1, n_hidden, |_, _| rng.gaussian(0.5)),
    }
}

/// E(v, h) = -a.v - b.h - v W h, straight from the definition.
pub fn energy(p: &RbmParams, v: &[f64], h: &[f64]) -> f64 {
    let nv = p.n_visible();
    let nh = p.n_hidden();
    let mut e = 0.0;
    for i in 0..nv {
        e -= p.visible_bias.get(0, i) * v[i];
    }
    for j in 0..nh {
        e -= p.hidden_bias.get(0, j) * h[j];
    }
    for i in 0..nv {
        for j in 0..nh {
            e -= v[i] * p.weights.get(i, j) * h[j];
        }
    }
    e
}

/// Partition function by direct double enumeration.
pub fn partition_function(p: &RbmParams) -> f64 {
    let mut z = 0.0;
    for v in binary_patterns(p.n_visible()) {
        for h in binary_patterns(p.n_hidden()) {
            z += (-energy(p, &v, &h)).exp();
        }
    }
    z
}

/// Unnormalized probability of a visible pattern: sum over hidden states.
pub fn unnormalized_prob(p: &RbmParams, v: &[f64]) -> f64 {
    binary_patterns(p.n_hidden())
        .iter()
        .map(|h| (-energy(p, v, h)).exp())
        .sum()
}

/// P(v) by direct summation.
pub fn exact_prob(p: &RbmParams, v: &[f64]) -> f64 {
    unnormalized_prob(p, v) / partition_function(p)
}

/// Exact mean log-likelihood gradient with respect to W over the data rows:
/// <v_i P(h_j|v)>_data - sum_v P(v) v_i P(h_j|v).
pub fn exact_weight_gradient(p: &RbmParams, data: &Matrix) -> Matrix {
    let nv = p.n_visible();
    let nh = p.n_hidden();
    let z = partition_function(p);

    let hidden_given = |v: &[f64]| -> Vec<f64> {
        (0..nh)
            .map(|j| {
                let mut pre = p.hidden_bias.get(0, j);
                for i in 0..nv {
                    pre += v[i] * p.weights.get(i, j);
                }
                1.0 / (1.0 + (-pre).exp())
            })
            .collect()
    };

    let mut positive = vec![0.0; nv * nh];
    for r in 0..data.rows() {
        let v = data.row_slice(r);
        let hp = hidden_given(v);
        for i in 0..nv {
            for j in 0..nh {
                positive[i * nh + j] += v[i] * hp[j];
            }
        }
    }
    for x in positive.iter_mut() {
        *x /= data.rows() as f64;
    }

    let mut negative = vec![0.0; nv * nh];
    for v in binary_patterns(nv) {
        let pv = unnormalized_prob(p, &v) / z;
        let hp = hidden_given(&v);
        for i in 0..nv {
            for j in 0..nh {
                negative[i * nh + j] += pv * v[i] * hp[j];
            }
        }
    }

    let data_out: Vec<f64> = positive
        .iter()
        .zip(&negative)
        .map(|(p, n)| p - n)
        .collect();
    Matrix::new(nv, nh, data_out).unwrap()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}
