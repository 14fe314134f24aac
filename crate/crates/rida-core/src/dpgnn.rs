//! Depth-plus propagation over incomplete attributes with local-global
//! attention, plus the 2-layer linear head that emits pseudo-labels.
//!
//! The pipeline is: initialize features from the row-normalized incomplete
//! matrix (missing → 0, observed → x̄·ω + (1−ω)), then propagate K hops
//! through the no-self-loop normalized adjacency with per-layer decay
//! λ_k = δ(1−γ)^k, optionally re-weighted per vertex by the product of a
//! local cosine (candidate vs previous layer) and a global cosine
//! (candidate vs initial features). The bifocal partition restricts those
//! cosines to genuinely observed coordinates for attribute-incomplete
//! vertices so supplemented values can't vote on their own retention.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graphio::{AttributeMatrix, LabeledSplit, LoopVariant, NormalizedAdjacency};
use crate::nn;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationConfig {
    /// Number of propagation layers K ≥ 1.
    pub k: usize,
    /// Decay scale δ ≥ 0 (0 degenerates to identity propagation).
    pub delta: f64,
    /// Decay rate γ in [0, 1).
    pub gamma: f64,
    /// Observed-entry shrinkage ω in [0, 1] used by feature initialization.
    pub omega: f64,
    pub use_global_attention: bool,
    pub use_local_attention: bool,
    pub use_bfp: bool,
}

impl Default for PropagationConfig {
    /// Default hyperparameters (K is dataset-dependent; 16 is the
    /// general default, 8 for CITESEER-sized graphs).
    fn default() -> Self {
        PropagationConfig {
            k: 16,
            delta: 0.1,
            gamma: 0.01,
            omega: 0.9,
            use_global_attention: true,
            use_local_attention: true,
            use_bfp: true,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::validation("propagation layer count K must be ≥ 1"));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::validation(format!(
                "delta must be ≥ 0, got {}",
                self.delta
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::validation(format!(
                "gamma must lie in [0,1), got {}",
                self.gamma
            )));
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(Error::validation(format!(
                "omega must lie in [0,1], got {}",
                self.omega
            )));
        }
        Ok(())
    }

    fn attention_enabled(&self) -> bool {
        self.use_local_attention || self.use_global_attention
    }
}

/// Per-layer decay λ_k = δ(1−γ)^k for the 1-based layer index k.
pub fn decay(k: usize, delta: f64, gamma: f64) -> f64 {
    debug_assert!(k >= 1, "decay is defined for 1-based layer indices");
    delta * (1.0 - gamma).powi(k as i32)
}

/// Feature initialization on a row-normalized incomplete matrix:
/// missing entries become 0, observed entries x̄ become x̄·ω + (1−ω).
pub fn initialize_features(x: &AttributeMatrix, omega: f64) -> Array2<f64> {
    let mut out = Array2::zeros(x.values.raw_dim());
    for i in 0..x.n() {
        for j in 0..x.d() {
            if x.mask[[i, j]] {
                out[[i, j]] = x.values[[i, j]] * omega + (1.0 - omega);
            }
        }
    }
    out
}

/// Vertex partition for the bifocal processor: attribute-complete vertices
/// attend over all coordinates, incomplete ones only over their observed
/// coordinate list.
#[derive(Debug, Clone)]
pub struct BfpPartition {
    pub complete_set: Vec<usize>,
    pub incomplete_set: Vec<usize>,
    /// `None` for complete vertices (all coordinates); observed list otherwise.
    pub observed: Vec<Option<Vec<usize>>>,
}

pub fn bfp_partition(mask: &Array2<bool>) -> BfpPartition {
    let (n, d) = mask.dim();
    let mut complete_set = Vec::new();
    let mut incomplete_set = Vec::new();
    let mut observed = Vec::with_capacity(n);
    for v in 0..n {
        let row = mask.row(v);
        if row.iter().all(|&m| m) {
            complete_set.push(v);
            observed.push(None);
        } else {
            incomplete_set.push(v);
            observed.push(Some((0..d).filter(|&j| mask[[v, j]]).collect()));
        }
    }
    BfpPartition {
        complete_set,
        incomplete_set,
        observed,
    }
}

/// Local-global attention coefficient for one vertex: the product of
/// cos(candidate, previous) and cos(candidate, initial) restricted to
/// `coords` (`None` = all coordinates). Disabled factors contribute 1; a
/// zero-norm restricted vector makes its cosine 0.
pub fn lg_attention(
    x_cand: &[f64],
    x_prev: &[f64],
    x_init: &[f64],
    coords: Option<&[usize]>,
    use_local: bool,
    use_global: bool,
) -> f64 {
    let cos = |a: &[f64], b: &[f64]| match coords {
        Some(list) => nn::masked_cosine(a, b, list),
        None => nn::cosine(a, b),
    };
    let mut c = 1.0;
    if use_local {
        c *= cos(x_cand, x_prev);
    }
    if use_global {
        c *= cos(x_cand, x_init);
    }
    c
}

/// Full propagation trace: X^(0)..X^(K) plus the per-layer per-vertex
/// attention coefficients (1.0 where attention is disabled).
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub layers: Vec<Array2<f64>>,
    /// n × K; column k−1 holds the coefficients used to form X^(k).
    pub attention: Array2<f64>,
}

impl LayerTrace {
    pub fn final_layer(&self) -> &Array2<f64> {
        self.layers.last().expect("trace holds at least X^(0)")
    }
}

fn row_slice(m: &Array2<f64>, v: usize) -> &[f64] {
    m.row(v).to_slice().expect("standard-layout rows are contiguous")
}

fn propagate_impl(
    xp: &Array2<f64>,
    hat_a: &NormalizedAdjacency,
    cfg: &PropagationConfig,
    mask: &Array2<bool>,
    keep_all_layers: bool,
) -> Result<LayerTrace> {
    cfg.validate()?;
    if hat_a.variant() != LoopVariant::WithoutSelfLoops {
        return Err(Error::validation(
            "propagation requires the no-self-loop normalized adjacency",
        ));
    }
    let (n, d) = xp.dim();
    if hat_a.n() != n || mask.dim() != (n, d) {
        return Err(Error::validation(format!(
            "inconsistent propagation shapes: features {n}x{d}, adjacency n={}, mask {:?}",
            hat_a.n(),
            mask.dim()
        )));
    }
    let partition = if cfg.use_bfp && cfg.attention_enabled() {
        Some(bfp_partition(mask))
    } else {
        None
    };
    let x0 = xp.clone();
    let mut attention = Array2::ones((n, cfg.k));
    let mut layers = Vec::with_capacity(if keep_all_layers { cfg.k + 1 } else { 2 });
    layers.push(x0.clone());
    let mut x_prev = x0.clone();
    for k in 1..=cfg.k {
        let lam = decay(k, cfg.delta, cfg.gamma);
        let p = hat_a.mul_dense(&x_prev);
        let mut x_next = Array2::zeros((n, d));
        if cfg.attention_enabled() {
            let mut cand = vec![0.0; d];
            for v in 0..n {
                let prev_row = row_slice(&x_prev, v);
                let p_row = row_slice(&p, v);
                for j in 0..d {
                    cand[j] = lam * p_row[j] + (1.0 - lam) * prev_row[j];
                }
                let coords = partition
                    .as_ref()
                    .and_then(|part| part.observed[v].as_deref());
                let c = lg_attention(
                    &cand,
                    prev_row,
                    row_slice(&x0, v),
                    coords,
                    cfg.use_local_attention,
                    cfg.use_global_attention,
                );
                attention[[v, k - 1]] = c;
                let lc = lam * c;
                for j in 0..d {
                    x_next[[v, j]] = lc * p_row[j] + (1.0 - lc) * prev_row[j];
                }
            }
        } else {
            for v in 0..n {
                for j in 0..d {
                    x_next[[v, j]] = lam * p[[v, j]] + (1.0 - lam) * x_prev[[v, j]];
                }
            }
        }
        if keep_all_layers {
            layers.push(x_next.clone());
        } else if k == cfg.k {
            layers.push(x_next.clone());
        }
        x_prev = x_next;
    }
    Ok(LayerTrace { layers, attention })
}

/// K-hop decayed propagation with optional attention/BFP, returning the
/// full layer trace X^(0)..X^(K).
pub fn propagate(
    xp: &Array2<f64>,
    hat_a: &NormalizedAdjacency,
    cfg: &PropagationConfig,
    mask: &Array2<bool>,
) -> Result<LayerTrace> {
    propagate_impl(xp, hat_a, cfg, mask, true)
}

/// Memory-lean variant keeping only X^(0) and X^(K) (the attention matrix
/// is always complete). Identical numerics to [`propagate`].
pub fn propagate_final(
    xp: &Array2<f64>,
    hat_a: &NormalizedAdjacency,
    cfg: &PropagationConfig,
    mask: &Array2<bool>,
) -> Result<LayerTrace> {
    propagate_impl(xp, hat_a, cfg, mask, false)
}

/// The pseudo-labeling head: two affine maps d → hidden → c with no
/// nonlinearity between them.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformParams {
    /// d × hidden.
    pub w2: Array2<f64>,
    /// hidden.
    pub b1: Array1<f64>,
    /// hidden × c.
    pub w1: Array2<f64>,
    /// c.
    pub b2: Array1<f64>,
}

impl TransformParams {
    pub fn zeros(d: usize, hidden: usize, c: usize) -> TransformParams {
        TransformParams {
            w2: Array2::zeros((d, hidden)),
            b1: Array1::zeros(hidden),
            w1: Array2::zeros((hidden, c)),
            b2: Array1::zeros(c),
        }
    }

    pub fn logits(&self, xk: &Array2<f64>) -> Array2<f64> {
        let mut h = xk.dot(&self.w2);
        h += &self.b1;
        let mut z = h.dot(&self.w1);
        z += &self.b2;
        z
    }
}

pub(crate) struct TransformGradients {
    pub dw2: Array2<f64>,
    pub db1: Array1<f64>,
    pub dw1: Array2<f64>,
    pub db2: Array1<f64>,
    pub loss: f64,
}

pub(crate) fn transform_gradients(
    params: &TransformParams,
    xk: &Array2<f64>,
    labels: &[usize],
    train_idx: &[usize],
) -> TransformGradients {
    let mut h = xk.dot(&params.w2);
    h += &params.b1;
    let mut z = h.dot(&params.w1);
    z += &params.b2;
    let loss = nn::cross_entropy(&z, labels, train_idx);
    let dz = nn::cross_entropy_grad(&z, labels, train_idx);
    let dw1 = h.t().dot(&dz);
    let db2 = nn::column_sums(&dz);
    let dh = dz.dot(&params.w1.t());
    let dw2 = xk.t().dot(&dh);
    let db1 = nn::column_sums(&dh);
    TransformGradients {
        dw2,
        db1,
        dw1,
        db2,
        loss,
    }
}

/// Trains the linear head with full-batch gradient descent on the labeled
/// vertices; deterministic given `seed`.
pub fn train_transform(
    xk: &Array2<f64>,
    split: &LabeledSplit,
    epochs: usize,
    lr: f64,
    hidden: usize,
    seed: u64,
) -> Result<TransformParams> {
    let d = xk.ncols();
    let c = split.c;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = TransformParams {
        w2: nn::glorot_uniform(&mut rng, d, hidden),
        b1: Array1::zeros(hidden),
        w1: nn::glorot_uniform(&mut rng, hidden, c),
        b2: Array1::zeros(c),
    };
    for epoch in 0..epochs {
        let g = transform_gradients(&params, xk, &split.labels, &split.train_idx);
        nn::check_finite(g.loss, epoch)?;
        params.w2.scaled_add(-lr, &g.dw2);
        params.b1.scaled_add(-lr, &g.db1);
        params.w1.scaled_add(-lr, &g.dw1);
        params.b2.scaled_add(-lr, &g.db2);
    }
    Ok(params)
}

/// Logits and argmax pseudo-labels (ties resolve to the smallest class id).
pub fn predict(params: &TransformParams, xk: &Array2<f64>) -> (Array2<f64>, Vec<usize>) {
    let logits = params.logits(xk);
    let pseudo = nn::predict_classes(&logits);
    (logits, pseudo)
}

/// Writes a matrix as a flat text dump: header "rows cols", then one
/// row-major value per line.
pub fn save_matrix_dump(m: &Array2<f64>, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{} {}", m.nrows(), m.ncols()).map_err(|e| Error::io(path, e))?;
    for value in m.iter() {
        writeln!(w, "{value}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a matrix written by [`save_matrix_dump`].
pub fn load_matrix_dump(path: &Path) -> Result<Array2<f64>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing 'rows cols' header"))?
        .map_err(|e| Error::io(path, e))?;
    let mut it = header.split(' ');
    let (rows, cols) = match (it.next(), it.next(), it.next()) {
        (Some(r), Some(c), None) => (
            r.parse::<usize>()
                .map_err(|_| Error::parse(path, 1, "invalid row count"))?,
            c.parse::<usize>()
                .map_err(|_| Error::parse(path, 1, "invalid column count"))?,
        ),
        _ => return Err(Error::parse(path, 1, "header must be 'rows cols'")),
    };
    let mut values = Vec::with_capacity(rows * cols);
    for (idx, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let v: f64 = line
            .parse()
            .map_err(|_| Error::parse(path, idx + 2, format!("invalid value '{line}'")))?;
        values.push(v);
    }
    if values.len() != rows * cols {
        return Err(Error::validation(format!(
            "matrix dump {path:?} holds {} values, header promises {}",
            values.len(),
            rows * cols
        )));
    }
    Array2::from_shape_vec((rows, cols), values)
        .map_err(|e| Error::validation(format!("matrix dump shape error: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphio::{normalize_adjacency, Graph};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn complete_mask(n: usize, d: usize) -> Array2<bool> {
        Array2::from_elem((n, d), true)
    }

    #[test]
    fn initialize_features_cases() {
        let values = array![[1.0, 0.0], [0.4, 0.6]];
        let mut x = AttributeMatrix::complete(values);
        x.mask[[1, 1]] = false;
        x.values[[1, 1]] = 0.0;
        let xp = initialize_features(&x, 0.9);
        assert_abs_diff_eq!(xp[[0, 0]], 1.0, epsilon = 1e-15); // 0.9·1 + 0.1
        assert_abs_diff_eq!(xp[[0, 1]], 0.1, epsilon = 1e-15); // observed zero keeps the floor
        assert_abs_diff_eq!(xp[[1, 0]], 0.46, epsilon = 1e-15);
        assert_eq!(xp[[1, 1]], 0.0); // missing
    }

    #[test]
    fn decay_values() {
        assert_abs_diff_eq!(decay(1, 0.1, 0.01), 0.099, epsilon = 1e-15);
        assert_abs_diff_eq!(decay(5, 0.3, 0.0), 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(decay(16, 0.1, 0.01), 0.1 * 0.99f64.powi(16), epsilon = 1e-18);
        assert_abs_diff_eq!(decay(16, 0.1, 0.01), 0.08515, epsilon = 5e-6);
    }

    #[test]
    fn propagate_delta_zero_is_identity() {
        let g = Graph::new(3, [(0, 1), (1, 2)]).unwrap();
        let hat_a = normalize_adjacency(&g, false).unwrap();
        let xp = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let cfg = PropagationConfig {
            k: 4,
            delta: 0.0,
            ..PropagationConfig::default()
        };
        let trace = propagate(&xp, &hat_a, &cfg, &complete_mask(3, 2)).unwrap();
        assert_eq!(trace.layers.len(), 5);
        for layer in &trace.layers {
            assert_eq!(layer, &xp);
        }
    }

    #[test]
    fn propagate_two_vertices_hand_value() {
        let g = Graph::new(2, [(0, 1)]).unwrap();
        let hat_a = normalize_adjacency(&g, false).unwrap();
        let xp = array![[1.0, 0.0], [0.0, 1.0]];
        let cfg = PropagationConfig {
            k: 1,
            delta: 0.1,
            gamma: 0.0,
            use_global_attention: false,
            use_local_attention: false,
            use_bfp: false,
            ..PropagationConfig::default()
        };
        let trace = propagate(&xp, &hat_a, &cfg, &complete_mask(2, 2)).unwrap();
        let x1 = trace.final_layer();
        assert_abs_diff_eq!(x1[[0, 0]], 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(x1[[0, 1]], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(x1[[1, 0]], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(x1[[1, 1]], 0.9, epsilon = 1e-15);
    }

    #[test]
    fn identical_rows_make_attention_one_and_match_plain_propagation() {
        let g = Graph::new(4, [(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let hat_a = normalize_adjacency(&g, false).unwrap();
        let xp = Array2::from_shape_fn((4, 3), |(_, j)| (j + 1) as f64);
        let mask = complete_mask(4, 3);
        let with = PropagationConfig {
            k: 3,
            delta: 0.2,
            gamma: 0.05,
            use_global_attention: true,
            use_local_attention: true,
            use_bfp: false,
            ..PropagationConfig::default()
        };
        let without = PropagationConfig {
            use_global_attention: false,
            use_local_attention: false,
            ..with
        };
        let ta = propagate(&xp, &hat_a, &with, &mask).unwrap();
        let tb = propagate(&xp, &hat_a, &without, &mask).unwrap();
        for c in ta.attention.iter() {
            assert_abs_diff_eq!(*c, 1.0, epsilon = 1e-12);
        }
        for (a, b) in ta.final_layer().iter().zip(tb.final_layer().iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn bfp_partition_cases() {
        let mut mask = complete_mask(3, 4);
        let part = bfp_partition(&mask);
        assert!(part.incomplete_set.is_empty());
        assert_eq!(part.complete_set, vec![0, 1, 2]);

        for j in 0..4 {
            mask[[1, j]] = false;
        }
        mask[[2, 0]] = false;
        let part = bfp_partition(&mask);
        assert_eq!(part.incomplete_set, vec![1, 2]);
        assert_eq!(part.observed[1].as_deref(), Some(&[][..]));
        assert_eq!(part.observed[2].as_deref(), Some(&[1, 2, 3][..]));
    }

    #[test]
    fn bfp_is_noop_on_fully_observed_matrix() {
        let g = Graph::new(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)]).unwrap();
        let hat_a = normalize_adjacency(&g, false).unwrap();
        let xp = Array2::from_shape_fn((5, 4), |(i, j)| ((i * 7 + j * 3) % 5) as f64 * 0.25);
        let mask = complete_mask(5, 4);
        let on = PropagationConfig {
            k: 4,
            use_bfp: true,
            ..PropagationConfig::default()
        };
        let off = PropagationConfig {
            use_bfp: false,
            ..on
        };
        let ta = propagate(&xp, &hat_a, &on, &mask).unwrap();
        let tb = propagate(&xp, &hat_a, &off, &mask).unwrap();
        assert_eq!(ta.final_layer(), tb.final_layer());
        assert_eq!(ta.attention, tb.attention);
    }

    #[test]
    fn lg_attention_cases() {
        let r = [0.3, 0.7, 0.1];
        assert_abs_diff_eq!(lg_attention(&r, &r, &r, None, true, true), 1.0, epsilon = 1e-12);
        // Global factor zero when the initial row is zero on the coords.
        let zero = [0.0, 0.0, 0.0];
        assert_eq!(lg_attention(&r, &r, &zero, None, true, true), 0.0);
        // Hand value: local 1/√2, global 1.
        let cand = [1.0, 0.0];
        let prev = [1.0, 1.0];
        let init = [1.0, 0.0];
        assert_abs_diff_eq!(
            lg_attention(&cand, &prev, &init, None, true, true),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-12
        );
        // Both-flags coefficient is the product of the single-flag ones.
        let a = [0.2, -0.4, 0.9];
        let b = [0.5, 0.5, -0.1];
        let c = [1.0, 0.3, 0.3];
        let local = lg_attention(&a, &b, &c, None, true, false);
        let global = lg_attention(&a, &b, &c, None, false, true);
        let both = lg_attention(&a, &b, &c, None, true, true);
        assert_abs_diff_eq!(both, local * global, epsilon = 1e-12);
        // Masked variant restricted to coords.
        assert_abs_diff_eq!(
            lg_attention(&cand, &prev, &init, Some(&[0]), true, true),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn attention_stays_in_unit_interval_under_masked_propagation() {
        let g = Graph::new(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5), (1, 4)]).unwrap();
        let hat_a = normalize_adjacency(&g, false).unwrap();
        let mut x = AttributeMatrix::complete(Array2::from_shape_fn((6, 5), |(i, j)| {
            (((i * 5 + j) % 7) as f64 - 3.0) * 0.2
        }));
        for &(v, j) in &[(0usize, 1usize), (0, 2), (3, 0), (3, 4), (5, 2)] {
            x.mask[[v, j]] = false;
            x.values[[v, j]] = 0.0;
        }
        let xp = initialize_features(&crate::graphio::row_normalize_attributes(&x), 0.9);
        let cfg = PropagationConfig {
            k: 6,
            ..PropagationConfig::default()
        };
        let trace = propagate(&xp, &hat_a, &cfg, &x.mask).unwrap();
        for &c in trace.attention.iter() {
            assert!((-1.0..=1.0).contains(&c), "attention {c} out of range");
        }
        // Memory-lean variant agrees with the full trace.
        let lean = propagate_final(&xp, &hat_a, &cfg, &x.mask).unwrap();
        assert_eq!(lean.final_layer(), trace.final_layer());
        assert_eq!(lean.attention, trace.attention);
        assert_eq!(lean.layers.len(), 2);
    }

    #[test]
    fn gamma_zero_attention_off_matches_dense_closed_form() {
        let g = Graph::new(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 2)]).unwrap();
        let hat_a = normalize_adjacency(&g, false).unwrap();
        let xp = Array2::from_shape_fn((5, 3), |(i, j)| ((i + 2 * j) % 4) as f64 * 0.5);
        let (delta, k) = (0.15, 7);
        let cfg = PropagationConfig {
            k,
            delta,
            gamma: 0.0,
            use_global_attention: false,
            use_local_attention: false,
            use_bfp: false,
            ..PropagationConfig::default()
        };
        let trace = propagate(&xp, &hat_a, &cfg, &complete_mask(5, 3)).unwrap();
        // Closed form ((1−δ)I + δÂ)^K X'.
        let mut m = hat_a.to_dense() * delta;
        for i in 0..5 {
            m[[i, i]] += 1.0 - delta;
        }
        let mut expect = xp.clone();
        for _ in 0..k {
            expect = m.dot(&expect);
        }
        for (a, b) in trace.final_layer().iter().zip(expect.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-10);
        }
    }

    fn separable_features() -> (Array2<f64>, LabeledSplit) {
        // Two well-separated clusters of rows.
        let mut xk = Array2::zeros((8, 3));
        for i in 0..8 {
            if i < 4 {
                xk[[i, 0]] = 1.0 + 0.01 * i as f64;
            } else {
                xk[[i, 1]] = 1.0 + 0.01 * i as f64;
            }
        }
        let labels = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let split = LabeledSplit {
            labels,
            train_idx: vec![0, 1, 4, 5],
            test_idx: vec![2, 3, 6, 7],
            c: 2,
        };
        (xk, split)
    }

    #[test]
    fn train_transform_fits_separable_toy_and_is_deterministic() {
        let (xk, split) = separable_features();
        let params = train_transform(&xk, &split, 200, 0.5, 4, 11).unwrap();
        let (_, pred) = predict(&params, &xk);
        for &v in &split.train_idx {
            assert_eq!(pred[v], split.labels[v]);
        }
        for &v in &split.test_idx {
            assert_eq!(pred[v], split.labels[v]);
        }
        let again = train_transform(&xk, &split, 200, 0.5, 4, 11).unwrap();
        assert_eq!(params, again);
    }

    #[test]
    fn zero_head_has_uniform_loss_and_predicts_class_zero() {
        let (xk, split) = separable_features();
        let params = TransformParams::zeros(3, 4, 2);
        let g = transform_gradients(&params, &xk, &split.labels, &split.train_idx);
        assert_abs_diff_eq!(g.loss, (2.0f64).ln(), epsilon = 1e-12);
        let (logits, pseudo) = predict(&params, &xk);
        assert!(logits.iter().all(|&z| z == 0.0));
        assert!(pseudo.iter().all(|&p| p == 0));
    }

    #[test]
    fn transform_gradients_match_central_finite_differences() {
        // 5-vertex toy with irregular values.
        let xk = array![
            [0.2, -0.1, 0.7],
            [0.9, 0.4, -0.3],
            [-0.5, 0.8, 0.1],
            [0.3, 0.3, 0.3],
            [-0.2, -0.6, 0.5]
        ];
        let split = LabeledSplit {
            labels: vec![0, 1, 2, 1, 0],
            train_idx: vec![0, 1, 2, 4],
            test_idx: vec![3],
            c: 3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = TransformParams {
            w2: nn::glorot_uniform(&mut rng, 3, 4),
            b1: Array1::from_shape_fn(4, |i| 0.05 * i as f64),
            w1: nn::glorot_uniform(&mut rng, 4, 3),
            b2: Array1::from_shape_fn(3, |i| -0.02 * i as f64),
        };
        let g = transform_gradients(&params, &xk, &split.labels, &split.train_idx);
        let h = 1e-6;
        let loss_at = |p: &TransformParams| {
            transform_gradients(p, &xk, &split.labels, &split.train_idx).loss
        };
        let mut max_rel: f64 = 0.0;
        let mut check = |analytic: f64, plus: TransformParams, minus: TransformParams| {
            let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            let rel = (analytic - fd).abs() / fd.abs().max(1e-6);
            if rel > max_rel {
                max_rel = rel;
            }
        };
        for i in 0..3 {
            for j in 0..4 {
                let mut p = params.clone();
                let mut m = params.clone();
                p.w2[[i, j]] += h;
                m.w2[[i, j]] -= h;
                check(g.dw2[[i, j]], p, m);
            }
        }
        for i in 0..4 {
            for j in 0..3 {
                let mut p = params.clone();
                let mut m = params.clone();
                p.w1[[i, j]] += h;
                m.w1[[i, j]] -= h;
                check(g.dw1[[i, j]], p, m);
            }
        }
        for i in 0..4 {
            let mut p = params.clone();
            let mut m = params.clone();
            p.b1[i] += h;
            m.b1[i] -= h;
            check(g.db1[i], p, m);
        }
        for i in 0..3 {
            let mut p = params.clone();
            let mut m = params.clone();
            p.b2[i] += h;
            m.b2[i] -= h;
            check(g.db2[i], p, m);
        }
        assert!(max_rel <= 1e-4, "max relative gradient error {max_rel}");
    }

    #[test]
    fn divergent_training_reports_epoch() {
        // Identical rows with conflicting labels keep the gradient nonzero
        // at any weight scale, so an absurd learning rate squares the
        // weights past f64 range within a few epochs; the NaN loss must
        // surface as a divergence error.
        let xk = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]];
        let split = LabeledSplit {
            labels: vec![0, 1, 0, 1],
            train_idx: vec![0, 1, 2, 3],
            test_idx: vec![],
            c: 2,
        };
        let err = train_transform(&xk, &split, 50, 1e150, 4, 0);
        match err {
            Err(Error::Divergence { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn matrix_dump_round_trips() {
        let m = array![[1.5, -2.0], [0.0, 3.25], [1e-9, 7.0]];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("head.txt");
        save_matrix_dump(&m, &path).unwrap();
        let back = load_matrix_dump(&path).unwrap();
        assert_eq!(m, back);
        let first = fs::read_to_string(&path).unwrap();
        assert!(first.starts_with("3 2\n"));
    }

    #[test]
    fn propagation_cost_scales_with_edge_count() {
        // Coarse benchmark: at fixed n, doubling |E| should roughly double
        // per-layer cost (the Â·X product dominates when avg degree is
        // high). Generous band to stay robust on shared machines.
        use std::time::Instant;
        let n = 200;
        let d = 300;
        let mut e1 = Vec::new();
        for u in 0..n {
            for s in 1..=40usize {
                let v = (u + s) % n;
                if u < v {
                    e1.push((u, v));
                }
            }
        }
        let mut e2 = e1.clone();
        for u in 0..n {
            for s in 41..=80usize {
                let v = (u + s) % n;
                if u < v {
                    e2.push((u, v));
                }
            }
        }
        let g1 = Graph::new(n, e1).unwrap();
        let g2 = Graph::new(n, e2).unwrap();
        let a1 = normalize_adjacency(&g1, false).unwrap();
        let a2 = normalize_adjacency(&g2, false).unwrap();
        let xp = Array2::from_shape_fn((n, d), |(i, j)| ((i + j) % 3) as f64);
        let mask = complete_mask(n, d);
        let cfg = PropagationConfig {
            k: 8,
            use_global_attention: false,
            use_local_attention: false,
            use_bfp: false,
            ..PropagationConfig::default()
        };
        let time_min = |a: &NormalizedAdjacency| {
            (0..3)
                .map(|_| {
                    let t = Instant::now();
                    let trace = propagate_final(&xp, a, &cfg, &mask).unwrap();
                    assert!(trace.final_layer()[[0, 0]].is_finite());
                    t.elapsed().as_secs_f64()
                })
                .fold(f64::INFINITY, f64::min)
        };
        let t1 = time_min(&a1);
        let t2 = time_min(&a2);
        let ratio = t2 / t1;
        assert!(
            (1.0..=3.5).contains(&ratio),
            "edge-doubling runtime ratio {ratio:.2} outside the coarse O(|E|·d) band"
        );
    }
}
