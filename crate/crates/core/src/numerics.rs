//! Dense row-major matrices over f64, elementwise nonlinearities, column
//! statistics and seeded sampling. Everything above this module is built on
//! these primitives.
//!
//! `column_variance` is the population variance (divide by N). The PRNG is
//! ChaCha8 seeded from a caller-supplied `u64`; identical seeds give
//! identical streams.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Dense 2-D array of f64 in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Domain(format!(
                "data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("entry {i} is {}", data[i])));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Copy of row `r` as a 1xcols matrix.
    pub fn row(&self, r: usize) -> Matrix {
        Matrix {
            rows: 1,
            cols: self.cols,
            data: self.row_slice(r).to_vec(),
        }
    }

    /// Stack a subset of rows, in the order given.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row_slice(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn zip_with(&self, other: &Matrix, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(shape_err(op, self, other));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn scale(&self, k: f64) -> Matrix {
        self.map(|x| k * x)
    }

    /// Add a 1xcols row vector to every row.
    pub fn add_row_broadcast(&self, row: &Matrix) -> Result<Matrix> {
        if row.rows != 1 || row.cols != self.cols {
            return Err(shape_err("add_row_broadcast", self, row));
        }
        let mut out = self.clone();
        for r in 0..out.rows {
            let base = r * out.cols;
            for c in 0..out.cols {
                out.data[base + c] += row.data[c];
            }
        }
        Ok(out)
    }

    /// Mean of squared entrywise differences.
    pub fn mean_squared_diff(&self, other: &Matrix) -> Result<f64> {
        let d = self.sub(other)?;
        Ok(d.data.iter().map(|x| x * x).sum::<f64>() / d.data.len() as f64)
    }

    pub fn column_sum(&self) -> Matrix {
        let mut sums = vec![0.0; self.cols];
        for r in 0..self.rows {
            let base = r * self.cols;
            for c in 0..self.cols {
                sums[c] += self.data[base + c];
            }
        }
        Matrix {
            rows: 1,
            cols: self.cols,
            data: sums,
        }
    }
}

fn shape_err(op: &'static str, a: &Matrix, b: &Matrix) -> Error {
    Error::Shape {
        op,
        lhs_rows: a.rows,
        lhs_cols: a.cols,
        rhs_rows: b.rows,
        rhs_cols: b.cols,
    }
}

/// Standard matrix product. ikj loop order keeps the inner accesses
/// sequential in both operands.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(shape_err("matmul", a, b));
    }
    let mut out = vec![0.0; a.rows * b.cols];
    for i in 0..a.rows {
        let out_base = i * b.cols;
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            if aik == 0.0 {
                continue;
            }
            let b_base = k * b.cols;
            for j in 0..b.cols {
                out[out_base + j] += aik * b.data[b_base + j];
            }
        }
    }
    if let Some(i) = out.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("matmul output entry {i}")));
    }
    Ok(Matrix {
        rows: a.rows,
        cols: b.cols,
        data: out,
    })
}

/// Logistic function, stable over the whole f64 range.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_map(m: &Matrix) -> Matrix {
    m.map(sigmoid)
}

/// Seeded PRNG. ChaCha8 is the one generator used throughout the crate;
/// a given seed reproduces the same stream on every run.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha8Rng,
    seed: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn gaussian(&mut self, std: f64) -> f64 {
        let z: f64 = self.inner.sample(StandardNormal);
        z * std
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle(&mut self, xs: &mut [usize]) {
        for i in (1..xs.len()).rev() {
            let j = self.inner.gen_range(0..=i);
            xs.swap(i, j);
        }
    }
}

/// Independent Bernoulli draw per entry; entries of `probs` must be in [0,1].
pub fn bernoulli_sample(probs: &Matrix, rng: &mut Rng) -> Result<Matrix> {
    if let Some(i) = probs.data.iter().position(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::Domain(format!(
            "bernoulli probability {} at flat index {} outside [0,1]",
            probs.data[i], i
        )));
    }
    let data = probs
        .data
        .iter()
        .map(|&p| if rng.uniform() < p { 1.0 } else { 0.0 })
        .collect();
    Ok(Matrix {
        rows: probs.rows,
        cols: probs.cols,
        data,
    })
}

/// Per-column arithmetic mean as a 1xcols matrix.
pub fn column_mean(m: &Matrix) -> Result<Matrix> {
    if m.rows == 0 {
        return Err(Error::EmptyInput("column_mean"));
    }
    Ok(m.column_sum().scale(1.0 / m.rows as f64))
}

/// Per-column population variance (divide by N) as a 1xcols matrix.
pub fn column_variance(m: &Matrix) -> Result<Matrix> {
    if m.rows < 2 {
        return Err(Error::EmptyInput("column_variance"));
    }
    let means = column_mean(m)?;
    let mut acc = vec![0.0; m.cols];
    for r in 0..m.rows {
        let base = r * m.cols;
        for c in 0..m.cols {
            let d = m.data[base + c] - means.data[c];
            acc[c] += d * d;
        }
    }
    let n = m.rows as f64;
    Ok(Matrix {
        rows: 1,
        cols: m.cols,
        data: acc.into_iter().map(|s| s / n).collect(),
    })
}
