//! Small shared numeric kernels: stable softmax, cross-entropy and its
//! logit gradient, Glorot initialization, masked cosine similarity, and the
//! deterministic argmax used everywhere a class has to be picked.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Row-wise numerically stable softmax.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for z in row.iter_mut() {
            *z = (*z - max).exp();
            sum += *z;
        }
        for z in row.iter_mut() {
            *z /= sum;
        }
    }
    out
}

/// Mean cross-entropy of `logits` against integer `labels`, restricted to
/// the rows listed in `rows`.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[usize], rows: &[usize]) -> f64 {
    let probs = softmax_rows(logits);
    let mut loss = 0.0;
    for &v in rows {
        loss -= (probs[[v, labels[v]]] + 1e-300).ln();
    }
    loss / rows.len() as f64
}

/// Gradient of [`cross_entropy`] with respect to the logits: softmax minus
/// one-hot on the listed rows (scaled by 1/|rows|), zero elsewhere.
pub fn cross_entropy_grad(logits: &Array2<f64>, labels: &[usize], rows: &[usize]) -> Array2<f64> {
    let mut grad = Array2::zeros(logits.raw_dim());
    let probs = softmax_rows(logits);
    let scale = 1.0 / rows.len() as f64;
    for &v in rows {
        for c in 0..logits.ncols() {
            grad[[v, c]] = probs[[v, c]] * scale;
        }
        grad[[v, labels[v]]] -= scale;
    }
    grad
}

/// Glorot-uniform matrix: entries drawn from U(-l, l) with
/// l = sqrt(6 / (fan_in + fan_out)), in fixed row-major draw order.
pub fn glorot_uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let mut w = Array2::zeros((rows, cols));
    for i in 0..rows {
        for j in 0..cols {
            w[[i, j]] = rng.gen_range(-limit..limit);
        }
    }
    w
}

/// Index of the row maximum; ties resolve to the smallest index.
pub fn argmax_row(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate().skip(1) {
        if x > row[best] {
            best = i;
        }
    }
    best
}

/// Cosine similarity of `a` and `b` restricted to the coordinates in
/// `coords`. Either restricted vector having zero norm yields 0.0.
pub fn masked_cosine(a: &[f64], b: &[f64], coords: &[usize]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for &j in coords {
        dot += a[j] * b[j];
        na += a[j] * a[j];
        nb += b[j] * b[j];
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Cosine similarity over all coordinates, with the same zero-norm rule.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for j in 0..a.len() {
        dot += a[j] * b[j];
        na += a[j] * a[j];
        nb += b[j] * b[j];
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Per-row argmax of a logit matrix, with the smallest-index tie rule.
pub fn predict_classes(logits: &Array2<f64>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|r| argmax_row(r.as_slice().expect("logits are contiguous")))
        .collect()
}

/// Fails with [`Error::Divergence`] when `loss` is NaN or infinite.
pub fn check_finite(loss: f64, epoch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence { epoch })
    }
}

/// Column sums as a 1-D array (bias gradients).
pub fn column_sums(m: &Array2<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(m.ncols());
    for row in m.rows() {
        for (j, &x) in row.iter().enumerate() {
            out[j] += x;
        }
    }
    out
}
