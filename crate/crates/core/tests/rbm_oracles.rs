//! Enumeration-backed checks of the RBM: free energy, exact likelihood,
//! conditional factorization, the CD-1 update direction, and learning on a
//! tiny dataset.

mod common;

use common::*;
use nodesep::numerics::{Matrix, Rng};
use nodesep::rbm::{
    binary_patterns, cd_step, exact_log_likelihood, free_energy, hidden_probs, train,
    TrainConfig, Velocity,
};

#[test]
fn free_energy_matches_energy_enumeration() {
    let mut rng = Rng::new(31);
    let p = random_params(4, 3, &mut rng);
    for v in binary_patterns(4) {
        let vm = Matrix::new(1, 4, v.clone()).unwrap();
        let f = free_energy(&p, &vm).unwrap().get(0, 0);
        let direct = unnormalized_prob(&p, &v);
        let rel = ((-f).exp() - direct).abs() / direct;
        assert!(rel < 1e-9, "relative error {rel}");
    }
}

#[test]
fn exact_log_likelihood_matches_direct_summation() {
    let mut rng = Rng::new(32);
    for _ in 0..5 {
        let p = random_params(5, 3, &mut rng);
        let data = Matrix::from_fn(6, 5, |_, _| f64::from(rng.uniform() < 0.5));
        let got = exact_log_likelihood(&p, &data).unwrap();
        let want: f64 = (0..data.rows())
            .map(|r| exact_prob(&p, data.row_slice(r)).ln())
            .sum::<f64>()
            / data.rows() as f64;
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
}

#[test]
fn hidden_conditional_factorizes() {
    // joint P(h|v) from enumeration equals the product of the per-unit
    // conditionals, confirming there are no hidden-hidden couplings
    let mut rng = Rng::new(33);
    let p = random_params(4, 3, &mut rng);
    for v in binary_patterns(4) {
        let vm = Matrix::new(1, 4, v.clone()).unwrap();
        let probs = hidden_probs(&p, &vm).unwrap();
        let norm: f64 = binary_patterns(3)
            .iter()
            .map(|h| (-energy(&p, &v, h)).exp())
            .sum();
        for h in binary_patterns(3) {
            let joint = (-energy(&p, &v, &h)).exp() / norm;
            let product: f64 = (0..3)
                .map(|j| {
                    let pj = probs.get(0, j);
                    if h[j] == 1.0 {
                        pj
                    } else {
                        1.0 - pj
                    }
                })
                .product();
            assert!((joint - product).abs() < 1e-9 * joint.max(1e-12));
        }
    }
}

#[test]
fn cd1_update_aligns_with_exact_gradient() {
    let mut rng = Rng::new(34);
    let cfg = TrainConfig {
        learning_rate: 1.0,
        momentum: 0.0,
        weight_decay: 0.0,
        cd_k: 1,
        ..TrainConfig::default()
    };
    let mut cos_sum = 0.0;
    const DRAWS: usize = 100;
    for _ in 0..DRAWS {
        let p = random_params(6, 3, &mut rng);
        let data = Matrix::from_fn(16, 6, |_, _| f64::from(rng.uniform() < 0.5));
        let exact = exact_weight_gradient(&p, &data);

        let mut updated = p.clone();
        let mut vel = Velocity::zeros(6, 3);
        cd_step(&mut updated, &data, &cfg, &mut rng, &mut vel).unwrap();
        let cd_direction = updated.weights.sub(&p.weights).unwrap();

        cos_sum += cosine(cd_direction.data(), exact.data());
    }
    let mean_cos = cos_sum / DRAWS as f64;
    assert!(mean_cos > 0.5, "mean cosine similarity {mean_cos}");
}

fn tiny_patterns() -> Matrix {
    // 8 binary patterns over 6 visible units with shared structure
    Matrix::new(
        8,
        6,
        vec![
            1.0, 1.0, 1.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 1.0, 1.0, 1.0, //
            1.0, 1.0, 0.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 0.0, 1.0, 1.0, //
            1.0, 1.0, 1.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 1.0, 1.0, 1.0, //
            1.0, 0.0, 0.0, 0.0, 0.0, 1.0, //
            0.0, 1.0, 1.0, 0.0, 0.0, 0.0,
        ],
    )
    .unwrap()
}

#[test]
fn training_increases_exact_likelihood() {
    let data = tiny_patterns();
    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 8,
        seed: 35,
        ..TrainConfig::default()
    };
    let init = nodesep::rbm::init_params(6, 3, cfg.seed).unwrap();
    let before = exact_log_likelihood(&init, &data).unwrap();
    let (trained, log) = train(&data, 3, &cfg).unwrap();
    let after = exact_log_likelihood(&trained, &data).unwrap();
    assert!(
        after > before,
        "log-likelihood {before} -> {after} did not increase"
    );
    assert_eq!(log.recon_errors.len(), 200);
}

#[test]
fn reconstruction_error_trends_down() {
    let data = tiny_patterns();
    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 8,
        seed: 36,
        ..TrainConfig::default()
    };
    let (_, log) = train(&data, 3, &cfg).unwrap();
    let quarter = log.recon_errors.len() / 4;
    let first: f64 = log.recon_errors[..quarter].iter().sum::<f64>() / quarter as f64;
    let last: f64 =
        log.recon_errors[log.recon_errors.len() - quarter..].iter().sum::<f64>() / quarter as f64;
    assert!(last <= first, "first-quarter {first}, last-quarter {last}");
}
