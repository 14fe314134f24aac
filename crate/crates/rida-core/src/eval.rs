//! Evaluation harness: the 2-layer GCN target model, the DICE baseline
//! attack, mean imputation, and the repeated-trial protocol that turns one
//! masked dataset into a clean-vs-attacked accuracy report.
//!
//! The target trains on the attribute matrix as the defender sees it —
//! missing entries enter as zeros (or as column means behind the imputation
//! switch). Clean and attacked arms share the split and the per-run seeds,
//! so every comparison in the report is paired.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dpgnn::{initialize_features, predict, propagate_final, train_transform, PropagationConfig};
use crate::error::{Error, Result};
use crate::graphio::{
    normalize_adjacency, row_normalize_attributes, split_labels, AttributeMatrix, Graph,
    LabeledSplit, NormalizedAdjacency,
};
use crate::haa::{run_attack, AttackConfig, Flip, FlipAction};
use crate::missingness::{apply_missingness, MissingnessSpec};
use crate::nn;

/// Target GCN hyperparameters. The architecture is fixed at two
/// convolutional layers with a rectifier between them; no dropout or weight
/// decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetConfig {
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TargetConfig {
    fn default() -> Self {
        TargetConfig {
            hidden: 16,
            lr: 0.005,
            epochs: 200,
            seed: 0,
        }
    }
}

/// Parameters of the target GCN: Z = Ã·relu(Ã·X·W0 + b0)·W1 + b1.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    pub w0: Array2<f64>,
    pub b0: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
}

struct GcnForward {
    h_pre: Array2<f64>,
    ah: Array2<f64>,
    z: Array2<f64>,
}

/// `u` is the precomputed first-hop aggregate Ã·X.
fn gcn_forward(tilde: &NormalizedAdjacency, u: &Array2<f64>, params: &GcnParams) -> GcnForward {
    let mut h_pre = u.dot(&params.w0);
    h_pre += &params.b0;
    let h = h_pre.mapv(|v| v.max(0.0));
    let ah = tilde.mul_dense(&h);
    let mut z = ah.dot(&params.w1);
    z += &params.b1;
    GcnForward { h_pre, ah, z }
}

pub(crate) struct GcnGradients {
    pub dw0: Array2<f64>,
    pub db0: Array1<f64>,
    pub dw1: Array2<f64>,
    pub db1: Array1<f64>,
    pub loss: f64,
}

pub(crate) fn gcn_gradients(
    params: &GcnParams,
    tilde: &NormalizedAdjacency,
    u: &Array2<f64>,
    split: &LabeledSplit,
) -> GcnGradients {
    let fwd = gcn_forward(tilde, u, params);
    let loss = nn::cross_entropy(&fwd.z, &split.labels, &split.train_idx);
    let dz = nn::cross_entropy_grad(&fwd.z, &split.labels, &split.train_idx);
    let db1 = nn::column_sums(&dz);
    let dw1 = fwd.ah.t().dot(&dz);
    // Ã is symmetric, so the adjoint of x ↦ Ã·x is itself.
    let dah = dz.dot(&params.w1.t());
    let dh = tilde.mul_dense(&dah);
    let mut dh_pre = dh;
    dh_pre.zip_mut_with(&fwd.h_pre, |g, &pre| {
        if pre <= 0.0 {
            *g = 0.0;
        }
    });
    let db0 = nn::column_sums(&dh_pre);
    let dw0 = u.t().dot(&dh_pre);
    GcnGradients {
        dw0,
        db0,
        dw1,
        db1,
        loss,
    }
}

/// Trains the target GCN with full-batch gradient descent on the train
/// vertices. Missing attribute entries participate as the zeros they are
/// stored as; deterministic given `cfg.seed`.
pub fn train_gcn_target(
    g: &Graph,
    x: &AttributeMatrix,
    split: &LabeledSplit,
    cfg: &TargetConfig,
) -> Result<GcnParams> {
    if cfg.hidden == 0 || cfg.epochs == 0 {
        return Err(Error::validation(
            "target model needs hidden > 0 and epochs > 0",
        ));
    }
    let tilde = normalize_adjacency(g, true)?;
    let u = tilde.mul_dense(&x.values);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = GcnParams {
        w0: nn::glorot_uniform(&mut rng, x.d(), cfg.hidden),
        b0: Array1::zeros(cfg.hidden),
        w1: nn::glorot_uniform(&mut rng, cfg.hidden, split.c),
        b1: Array1::zeros(split.c),
    };
    for epoch in 0..cfg.epochs {
        let grads = gcn_gradients(&params, &tilde, &u, split);
        nn::check_finite(grads.loss, epoch)?;
        params.w0.scaled_add(-cfg.lr, &grads.dw0);
        params.b0.scaled_add(-cfg.lr, &grads.db0);
        params.w1.scaled_add(-cfg.lr, &grads.dw1);
        params.b1.scaled_add(-cfg.lr, &grads.db1);
    }
    Ok(params)
}

/// Target-model logits on arbitrary (graph, attributes).
pub fn gcn_logits(params: &GcnParams, g: &Graph, x: &AttributeMatrix) -> Result<Array2<f64>> {
    let tilde = normalize_adjacency(g, true)?;
    let u = tilde.mul_dense(&x.values);
    Ok(gcn_forward(&tilde, &u, params).z)
}

/// Fraction of `test_idx` vertices whose prediction matches the label.
pub fn accuracy(predictions: &[usize], labels: &[usize], test_idx: &[usize]) -> Result<f64> {
    if test_idx.is_empty() {
        return Err(Error::validation(
            "accuracy is undefined on an empty test set",
        ));
    }
    let correct = test_idx
        .iter()
        .filter(|&&v| predictions[v] == labels[v])
        .count();
    Ok(correct as f64 / test_idx.len() as f64)
}

/// Per-vertex label knowledge for the baseline attack: `Some` on train
/// vertices, `None` elsewhere.
pub fn known_labels(split: &LabeledSplit) -> Vec<Option<usize>> {
    let mut known = vec![None; split.labels.len()];
    for &v in &split.train_idx {
        known[v] = Some(split.labels[v]);
    }
    known
}

/// One DICE flip with a marker for whether it came from the unconstrained
/// fallback path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiceFlip {
    pub flip: Flip,
    pub fallback: bool,
}

#[derive(Debug, Clone)]
pub struct DiceOutcome {
    pub graph: Graph,
    pub flips: Vec<DiceFlip>,
    /// Flips that had to ignore the label rule because no label-feasible
    /// move existed for the sampled action.
    pub fallback_flips: usize,
    /// Budget that could not be spent at all (no structurally feasible flip
    /// left); zero in any non-degenerate instance.
    pub shortfall: usize,
}

struct DiceWorkspace {
    edges: std::collections::BTreeSet<(usize, usize)>,
    degrees: Vec<usize>,
    flipped: std::collections::BTreeSet<(usize, usize)>,
}

impl DiceWorkspace {
    fn feasible(&self, u: usize, v: usize) -> Option<FlipAction> {
        if u == v || self.flipped.contains(&(u.min(v), u.max(v))) {
            return None;
        }
        let pair = (u.min(v), u.max(v));
        if self.edges.contains(&pair) {
            if self.degrees[u] < 2 || self.degrees[v] < 2 {
                None
            } else {
                Some(FlipAction::Del)
            }
        } else {
            Some(FlipAction::Add)
        }
    }

    fn apply(&mut self, u: usize, v: usize, action: FlipAction) {
        let pair = (u.min(v), u.max(v));
        match action {
            FlipAction::Add => {
                self.edges.insert(pair);
                self.degrees[u] += 1;
                self.degrees[v] += 1;
            }
            FlipAction::Del => {
                self.edges.remove(&pair);
                self.degrees[u] -= 1;
                self.degrees[v] -= 1;
            }
        }
        self.flipped.insert(pair);
    }
}

/// Disconnect-internally, connect-externally baseline. Each of the
/// ⌊|E|·ε⌋ flips tosses a fair coin: tails deletes a uniformly random edge
/// whose endpoints do not carry two different known labels (degree-1
/// protection applies), heads adds a uniformly random non-edge between two
/// differently-labeled known vertices. When the sampled action has no
/// label-feasible candidate, an unconstrained random feasible flip is used
/// instead and counted.
pub fn dice_attack(
    g: &Graph,
    known: &[Option<usize>],
    epsilon: f64,
    seed: u64,
) -> Result<DiceOutcome> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::validation(format!(
            "epsilon must lie in (0,1), got {epsilon}"
        )));
    }
    if known.len() != g.n() {
        return Err(Error::validation(format!(
            "label knowledge covers {} vertices, graph has {}",
            known.len(),
            g.n()
        )));
    }
    let n = g.n();
    let budget = (g.edge_count() as f64 * epsilon).floor() as usize;
    let mut ws = DiceWorkspace {
        edges: g.edges().iter().copied().collect(),
        degrees: (0..n).map(|v| g.degree(v)).collect(),
        flipped: std::collections::BTreeSet::new(),
    };
    let known_vertices: Vec<usize> = (0..n).filter(|&v| known[v].is_some()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flips = Vec::with_capacity(budget);
    let mut fallback_flips = 0;
    let mut shortfall = 0;
    for _ in 0..budget {
        let delete = rng.gen_bool(0.5);
        let candidates: Vec<(usize, usize)> = if delete {
            // Edges whose endpoints share a known label or where either
            // label is unknown — everything except known-different pairs.
            ws.edges
                .iter()
                .copied()
                .filter(|&(u, v)| {
                    ws.feasible(u, v) == Some(FlipAction::Del)
                        && match (known[u], known[v]) {
                            (Some(a), Some(b)) => a == b,
                            _ => true,
                        }
                })
                .collect()
        } else {
            let mut adds = Vec::new();
            for (i, &u) in known_vertices.iter().enumerate() {
                for &v in &known_vertices[i + 1..] {
                    if known[u] != known[v] && ws.feasible(u, v) == Some(FlipAction::Add) {
                        adds.push((u, v));
                    }
                }
            }
            adds
        };
        let chosen = if candidates.is_empty() {
            None
        } else {
            Some(candidates[rng.gen_range(0..candidates.len())])
        };
        let (u, v, action, fallback) = match chosen {
            Some((u, v)) => {
                let action = ws.feasible(u, v).expect("candidate pre-filtered");
                (u, v, action, false)
            }
            None => match unconstrained_flip(&mut rng, &ws, n) {
                Some((u, v, action)) => (u, v, action, true),
                None => {
                    shortfall = budget - flips.len();
                    break;
                }
            },
        };
        ws.apply(u, v, action);
        if fallback {
            fallback_flips += 1;
        }
        flips.push(DiceFlip {
            flip: Flip {
                u: u.min(v),
                v: u.max(v),
                action,
            },
            fallback,
        });
    }
    let graph = Graph::new(n, ws.edges)?;
    Ok(DiceOutcome {
        graph,
        flips,
        fallback_flips,
        shortfall,
    })
}

/// Uniform random structurally feasible flip: rejection sampling first,
/// full enumeration if the feasible set turns out to be very sparse.
fn unconstrained_flip(
    rng: &mut ChaCha8Rng,
    ws: &DiceWorkspace,
    n: usize,
) -> Option<(usize, usize, FlipAction)> {
    for _ in 0..(100 * n) {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if let Some(action) = ws.feasible(u, v) {
            return Some((u.min(v), u.max(v), action));
        }
    }
    let mut all = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if let Some(action) = ws.feasible(u, v) {
                all.push((u, v, action));
            }
        }
    }
    if all.is_empty() {
        None
    } else {
        Some(all[rng.gen_range(0..all.len())])
    }
}

/// Replaces each missing entry with its column mean over observed entries
/// (0 for columns with no observations); the result is fully observed.
pub fn mean_impute(x: &AttributeMatrix) -> AttributeMatrix {
    let (n, d) = x.values.dim();
    let mut means = vec![0.0; d];
    for j in 0..d {
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..n {
            if x.mask[[i, j]] {
                sum += x.values[[i, j]];
                count += 1;
            }
        }
        if count > 0 {
            means[j] = sum / count as f64;
        }
    }
    let mut values = x.values.clone();
    for i in 0..n {
        for j in 0..d {
            if !x.mask[[i, j]] {
                values[[i, j]] = means[j];
            }
        }
    }
    AttributeMatrix::complete(values)
}

/// Average after dropping the single best and single worst run.
pub fn trimmed_mean(runs: &[f64]) -> Result<f64> {
    if runs.len() < 3 {
        return Err(Error::validation(format!(
            "trimmed mean needs at least 3 runs, got {}",
            runs.len()
        )));
    }
    let mut sorted = runs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("accuracies are finite"));
    let kept = &sorted[1..sorted.len() - 1];
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

/// Full experiment configuration: masking, split, pseudo-label surrogate,
/// both attacks, and the repeated target-model trials. Flat on purpose —
/// it doubles as the reproducibility echo in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub alpha: f64,
    pub beta: f64,
    pub split_fraction: f64,
    pub epsilon: f64,
    pub k: usize,
    pub delta: f64,
    pub gamma: f64,
    pub eta: f64,
    pub omega: f64,
    pub use_local_attention: bool,
    pub use_global_attention: bool,
    pub use_bfp: bool,
    pub head_epochs: usize,
    pub head_lr: f64,
    pub surrogate_epochs: usize,
    pub surrogate_lr: f64,
    pub hidden: usize,
    pub target_epochs: usize,
    pub target_lr: f64,
    pub runs: usize,
    pub warm_start: bool,
    pub reattack: bool,
    pub mean_impute: bool,
    pub mask_seed: u64,
    pub split_seed: u64,
    pub attack_seed: u64,
    pub target_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            alpha: 0.3,
            beta: 0.7,
            split_fraction: 0.1,
            epsilon: 0.05,
            k: 16,
            delta: 0.1,
            gamma: 0.01,
            eta: 0.05,
            omega: 0.9,
            use_local_attention: true,
            use_global_attention: true,
            use_bfp: true,
            head_epochs: 200,
            head_lr: 0.01,
            surrogate_epochs: 100,
            surrogate_lr: 0.01,
            hidden: 16,
            target_epochs: 200,
            target_lr: 0.005,
            runs: 10,
            warm_start: false,
            reattack: false,
            mean_impute: false,
            mask_seed: 1,
            split_seed: 2,
            attack_seed: 3,
            target_seed: 4,
        }
    }
}

impl ExperimentConfig {
    pub fn propagation_config(&self) -> PropagationConfig {
        PropagationConfig {
            k: self.k,
            delta: self.delta,
            gamma: self.gamma,
            omega: self.omega,
            use_local_attention: self.use_local_attention,
            use_global_attention: self.use_global_attention,
            use_bfp: self.use_bfp,
        }
    }

    pub fn attack_config(&self) -> AttackConfig {
        AttackConfig {
            eta: self.eta,
            delta: self.delta,
            gamma: self.gamma,
            k: self.k,
            surrogate_epochs: self.surrogate_epochs,
            surrogate_lr: self.surrogate_lr,
            hidden: self.hidden,
            warm_start: self.warm_start,
            seed: self.attack_seed,
        }
    }

    pub fn target_config(&self, run: usize) -> TargetConfig {
        TargetConfig {
            hidden: self.hidden,
            lr: self.target_lr,
            epochs: self.target_epochs,
            seed: self.target_seed.wrapping_add(run as u64),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.propagation_config().validate()?;
        if self.runs < 3 {
            return Err(Error::validation(
                "the trimmed-mean protocol needs at least 3 runs",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CleanReport {
    pub runs: Vec<f64>,
    pub trimmed_mean: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackReport {
    pub runs: Vec<f64>,
    pub trimmed_mean: f64,
    /// Flips applied by the (first) attack of this arm.
    pub flips: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttacksReport {
    pub rida: AttackReport,
    pub dice: AttackReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultsReport {
    pub config: ExperimentConfig,
    pub clean: CleanReport,
    pub attacks: AttacksReport,
    pub timings: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn eval_arm(
    g: &Graph,
    x: &AttributeMatrix,
    split: &LabeledSplit,
    cfg: &TargetConfig,
) -> Result<f64> {
    let params = train_gcn_target(g, x, split, cfg)?;
    let logits = gcn_logits(&params, g, x)?;
    let pred = nn::predict_classes(&logits);
    accuracy(&pred, &split.labels, &split.test_idx)
}

/// Runs the full protocol: mask → split → pseudo-labels → both attacks →
/// `runs` paired target-model trainings on the clean and attacked graphs.
/// The attacked graphs are fixed across runs unless `reattack` recomputes
/// them per run seed.
pub fn run_experiment(
    g: &Graph,
    x: &AttributeMatrix,
    labels: &[usize],
    cfg: &ExperimentConfig,
) -> Result<ResultsReport> {
    cfg.validate()?;
    let total_start = Instant::now();
    let mut timings = BTreeMap::new();
    let mut warnings = Vec::new();

    let stage = Instant::now();
    let spec = MissingnessSpec::new(cfg.alpha, cfg.beta, cfg.mask_seed)?;
    let x_phi = apply_missingness(x, &spec)?;
    timings.insert("mask_s".to_string(), stage.elapsed().as_secs_f64());

    let labels_vec = labels.to_vec();
    let split = split_labels(&labels_vec, cfg.split_fraction, cfg.split_seed)?;

    // Pseudo-labels from the propagation surrogate on the masked data.
    let stage = Instant::now();
    let pcfg = cfg.propagation_config();
    let hat = normalize_adjacency(g, false)?;
    let xp = initialize_features(&row_normalize_attributes(&x_phi), cfg.omega);
    let trace = propagate_final(&xp, &hat, &pcfg, &x_phi.mask)?;
    let head = train_transform(
        trace.final_layer(),
        &split,
        cfg.head_epochs,
        cfg.head_lr,
        cfg.hidden,
        cfg.attack_seed,
    )?;
    let (_, pseudo) = predict(&head, trace.final_layer());
    timings.insert("pseudo_labels_s".to_string(), stage.elapsed().as_secs_f64());

    let known = known_labels(&split);
    let attack_pair = |seed: u64,
                       timings: &mut BTreeMap<String, f64>|
     -> Result<(crate::haa::AttackOutcome, DiceOutcome)> {
        let mut acfg = cfg.attack_config();
        acfg.seed = seed;
        let stage = Instant::now();
        let rida = run_attack(g, &x_phi, &split, &pseudo, cfg.epsilon, &acfg)?;
        *timings.entry("attack_rida_s".to_string()).or_insert(0.0) +=
            stage.elapsed().as_secs_f64();
        let stage = Instant::now();
        let dice = dice_attack(g, &known, cfg.epsilon, seed)?;
        *timings.entry("attack_dice_s".to_string()).or_insert(0.0) +=
            stage.elapsed().as_secs_f64();
        Ok((rida, dice))
    };

    let note_attack_warnings = |run: Option<usize>, rida: &crate::haa::AttackOutcome,
                                    dice: &DiceOutcome,
                                    warnings: &mut Vec<String>| {
        let prefix = match run {
            Some(r) => format!("run {r}: "),
            None => String::new(),
        };
        if let Some(w) = &rida.warning {
            warnings.push(format!("{prefix}rida: {w}"));
        }
        if dice.fallback_flips > 0 {
            warnings.push(format!(
                "{prefix}dice: {} unconstrained fallback flips",
                dice.fallback_flips
            ));
        }
        if dice.shortfall > 0 {
            warnings.push(format!(
                "{prefix}dice: budget shortfall of {} flips",
                dice.shortfall
            ));
        }
    };

    let base_attacks = if cfg.reattack {
        None
    } else {
        let (rida, dice) = attack_pair(cfg.attack_seed, &mut timings)?;
        note_attack_warnings(None, &rida, &dice, &mut warnings);
        Some((rida, dice))
    };

    let x_eval = if cfg.mean_impute {
        mean_impute(&x_phi)
    } else {
        x_phi.clone()
    };

    let mut clean_runs = Vec::with_capacity(cfg.runs);
    let mut rida_runs = Vec::with_capacity(cfg.runs);
    let mut dice_runs = Vec::with_capacity(cfg.runs);
    let mut rida_flips = 0;
    let mut dice_flips = 0;
    for run in 0..cfg.runs {
        let tcfg = cfg.target_config(run);
        let (rida_graph, dice_graph) = match &base_attacks {
            Some((rida, dice)) => (rida.graph.clone(), dice.graph.clone()),
            None => {
                let (rida, dice) =
                    attack_pair(cfg.attack_seed.wrapping_add(run as u64), &mut timings)?;
                note_attack_warnings(Some(run), &rida, &dice, &mut warnings);
                if run == 0 {
                    rida_flips = rida.state.budget_used();
                    dice_flips = dice.flips.len();
                }
                (rida.graph, dice.graph)
            }
        };
        if let Some((rida, dice)) = &base_attacks {
            rida_flips = rida.state.budget_used();
            dice_flips = dice.flips.len();
        }

        let stage = Instant::now();
        clean_runs.push(eval_arm(g, &x_eval, &split, &tcfg)?);
        *timings.entry("eval_clean_s".to_string()).or_insert(0.0) +=
            stage.elapsed().as_secs_f64();
        let stage = Instant::now();
        rida_runs.push(eval_arm(&rida_graph, &x_eval, &split, &tcfg)?);
        *timings.entry("eval_rida_s".to_string()).or_insert(0.0) +=
            stage.elapsed().as_secs_f64();
        let stage = Instant::now();
        dice_runs.push(eval_arm(&dice_graph, &x_eval, &split, &tcfg)?);
        *timings.entry("eval_dice_s".to_string()).or_insert(0.0) +=
            stage.elapsed().as_secs_f64();
    }

    let report = ResultsReport {
        config: cfg.clone(),
        clean: CleanReport {
            trimmed_mean: trimmed_mean(&clean_runs)?,
            runs: clean_runs,
        },
        attacks: AttacksReport {
            rida: AttackReport {
                trimmed_mean: trimmed_mean(&rida_runs)?,
                runs: rida_runs,
                flips: rida_flips,
            },
            dice: AttackReport {
                trimmed_mean: trimmed_mean(&dice_runs)?,
                runs: dice_runs,
                flips: dice_flips,
            },
        },
        timings: {
            let mut t = timings;
            t.insert("total_s".to_string(), total_start.elapsed().as_secs_f64());
            t
        },
        warnings,
    };
    Ok(report)
}

/// Writes `Aphi` as a CSV of log10(entry + 1e−12), one row per line.
/// Entries are expected non-negative (propagation matrices are).
pub fn export_propagation_heatmap(aphi: &Array2<f64>, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for i in 0..aphi.nrows() {
        let row: Vec<String> = (0..aphi.ncols())
            .map(|j| format!("{}", (aphi[[i, j]] + 1e-12).log10()))
            .collect();
        writeln!(w, "{}", row.join(",")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::haa::{build_transition_powers, build_propagation_matrix};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn toy_graph() -> (Graph, AttributeMatrix, LabeledSplit) {
        // Two triangles joined by one bridge, indicator features.
        let g = Graph::new(6, [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5), (2, 3)]).unwrap();
        let mut x = Array2::zeros((6, 4));
        for v in 0..6 {
            if v < 3 {
                x[[v, 0]] = 1.0;
                x[[v, 2]] = 0.3;
            } else {
                x[[v, 1]] = 1.0;
                x[[v, 3]] = 0.3;
            }
        }
        let split = LabeledSplit {
            labels: vec![0, 0, 0, 1, 1, 1],
            train_idx: vec![0, 3],
            test_idx: vec![1, 2, 4, 5],
            c: 2,
        };
        (g, AttributeMatrix::complete(x), split)
    }

    #[test]
    fn gcn_learns_separable_toy_and_is_deterministic() {
        let (g, x, split) = toy_graph();
        let cfg = TargetConfig {
            epochs: 400,
            lr: 0.2,
            hidden: 8,
            seed: 11,
        };
        let params = train_gcn_target(&g, &x, &split, &cfg).unwrap();
        let logits = gcn_logits(&params, &g, &x).unwrap();
        let pred = nn::predict_classes(&logits);
        assert_eq!(accuracy(&pred, &split.labels, &split.test_idx).unwrap(), 1.0);
        let again = train_gcn_target(&g, &x, &split, &cfg).unwrap();
        assert_eq!(params, again);
    }

    #[test]
    fn gcn_gradients_match_finite_differences() {
        let (g, x, split) = toy_graph();
        let tilde = normalize_adjacency(&g, true).unwrap();
        let u = tilde.mul_dense(&x.values);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let params = GcnParams {
            w0: nn::glorot_uniform(&mut rng, 4, 3),
            b0: Array1::from_vec(vec![0.05, -0.1, 0.02]),
            w1: nn::glorot_uniform(&mut rng, 3, 2),
            b1: Array1::from_vec(vec![0.01, -0.02]),
        };
        let grads = gcn_gradients(&params, &tilde, &u, &split);
        let loss_of = |p: &GcnParams| -> f64 {
            let fwd = gcn_forward(&tilde, &u, p);
            nn::cross_entropy(&fwd.z, &split.labels, &split.train_idx)
        };
        let h = 1e-6;
        let tol = 1e-4;
        let check = |get: &dyn Fn(&GcnParams) -> f64, set: &dyn Fn(&mut GcnParams, f64), analytic: f64| {
            let base = get(&params);
            let mut p = params.clone();
            set(&mut p, base + h);
            let up = loss_of(&p);
            set(&mut p, base - h);
            let down = loss_of(&p);
            let fd = (up - down) / (2.0 * h);
            let scale = fd.abs().max(1e-6);
            assert!(
                (analytic - fd).abs() <= tol * scale,
                "analytic {analytic} vs fd {fd}"
            );
        };
        for i in 0..4 {
            for j in 0..3 {
                check(
                    &|p| p.w0[[i, j]],
                    &move |p, v| p.w0[[i, j]] = v,
                    grads.dw0[[i, j]],
                );
            }
        }
        for j in 0..3 {
            check(&|p| p.b0[j], &move |p, v| p.b0[j] = v, grads.db0[j]);
        }
        for i in 0..3 {
            for j in 0..2 {
                check(
                    &|p| p.w1[[i, j]],
                    &move |p, v| p.w1[[i, j]] = v,
                    grads.dw1[[i, j]],
                );
            }
        }
        for j in 0..2 {
            check(&|p| p.b1[j], &move |p, v| p.b1[j] = v, grads.db1[j]);
        }
    }

    #[test]
    fn zero_features_predict_train_majority() {
        let (g, _, _) = toy_graph();
        let x = AttributeMatrix::complete(Array2::zeros((6, 4)));
        let split = LabeledSplit {
            labels: vec![0, 0, 0, 1, 1, 0],
            train_idx: vec![0, 1, 3],
            test_idx: vec![2, 4, 5],
            c: 2,
        };
        let cfg = TargetConfig {
            epochs: 300,
            lr: 0.5,
            ..TargetConfig::default()
        };
        let params = train_gcn_target(&g, &x, &split, &cfg).unwrap();
        let logits = gcn_logits(&params, &g, &x).unwrap();
        let pred = nn::predict_classes(&logits);
        // Train majority is class 0 (two of three) → every vertex predicts 0.
        assert!(pred.iter().all(|&p| p == 0));
        let majority_rate = split
            .test_idx
            .iter()
            .filter(|&&v| split.labels[v] == 0)
            .count() as f64
            / split.test_idx.len() as f64;
        assert_abs_diff_eq!(
            accuracy(&pred, &split.labels, &split.test_idx).unwrap(),
            majority_rate,
            epsilon = 1e-12
        );
    }

    #[test]
    fn accuracy_examples() {
        let labels = vec![0, 1, 2, 1];
        assert_eq!(accuracy(&[0, 1, 2, 1], &labels, &[0, 1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 0, 0, 0], &labels, &[0, 1, 2, 3]).unwrap(), 0.0);
        assert_eq!(
            accuracy(&[0, 1, 2, 0], &labels, &[0, 1, 2, 3]).unwrap(),
            0.75
        );
        assert!(accuracy(&[0, 1, 2, 1], &labels, &[]).is_err());
    }

    #[test]
    fn dice_respects_budget_rules_and_determinism() {
        let (g, _, split) = toy_graph();
        let known = known_labels(&split);
        // |E| = 7, ε = 0.45 → budget 3.
        let out = dice_attack(&g, &known, 0.45, 9).unwrap();
        assert_eq!(out.flips.len() + out.shortfall, 3);
        assert_eq!(out.shortfall, 0);
        // Rules: non-fallback deletes never split known-different pairs;
        // non-fallback adds connect known-different pairs; no repeats; no
        // isolated vertices.
        let mut seen = std::collections::BTreeSet::new();
        for df in &out.flips {
            let Flip { u, v, action } = df.flip;
            assert!(u < v);
            assert!(seen.insert((u, v)), "pair flipped twice");
            if !df.fallback {
                match action {
                    FlipAction::Del => {
                        if let (Some(a), Some(b)) = (known[u], known[v]) {
                            assert_eq!(a, b, "label-feasible DEL must not be cross-class");
                        }
                    }
                    FlipAction::Add => {
                        let (a, b) = (known[u].unwrap(), known[v].unwrap());
                        assert_ne!(a, b, "label-feasible ADD must be cross-class");
                    }
                }
            }
        }
        for v in 0..out.graph.n() {
            assert!(out.graph.degree(v) >= 1);
        }
        let again = dice_attack(&g, &known, 0.45, 9).unwrap();
        assert_eq!(again.flips, out.flips);
        assert_eq!(again.graph, out.graph);
        // Tiny ε → budget 0 → identity.
        let identity = dice_attack(&g, &known, 0.05, 9).unwrap();
        assert_eq!(identity.graph, g);
        assert!(identity.flips.is_empty());
    }

    #[test]
    fn dice_falls_back_when_labels_are_unknown() {
        // No known labels at all → adds have no label-feasible candidate,
        // so every heads-coin flips through the fallback path.
        let g = Graph::new(
            6,
            [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5), (2, 3), (0, 3), (1, 4)],
        )
        .unwrap();
        let known = vec![None; 6];
        let out = dice_attack(&g, &known, 0.4, 17).unwrap();
        assert_eq!(out.flips.len(), 3);
        let heads = out.flips.iter().filter(|f| f.fallback).count();
        assert_eq!(out.fallback_flips, heads);
        // Every ADD must have come from the fallback path.
        for df in &out.flips {
            if df.flip.action == FlipAction::Add {
                assert!(df.fallback);
            }
        }
    }

    #[test]
    fn mean_impute_examples() {
        let values = array![[1.0, 5.0], [0.0, 7.0], [3.0, 0.0]];
        let mask = array![[true, true], [false, true], [true, false]];
        let x = AttributeMatrix { values, mask };
        let filled = mean_impute(&x);
        assert!(filled.is_fully_observed());
        // Column 0: observed 1 and 3 → missing becomes 2.
        assert_abs_diff_eq!(filled.values[[1, 0]], 2.0, epsilon = 1e-15);
        // Column 1: observed 5 and 7 → missing becomes 6.
        assert_abs_diff_eq!(filled.values[[2, 1]], 6.0, epsilon = 1e-15);
        // Observed entries untouched.
        assert_eq!(filled.values[[0, 0]], 1.0);
        assert_eq!(filled.values[[0, 1]], 5.0);
        assert_eq!(filled.values[[2, 0]], 3.0);
        // No missing entries → identity.
        let complete = AttributeMatrix::complete(array![[1.0, 2.0]]);
        assert_eq!(mean_impute(&complete), complete);
        // All-missing column → zeros.
        let x = AttributeMatrix {
            values: array![[0.0], [0.0]],
            mask: array![[false], [false]],
        };
        assert!(mean_impute(&x).values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn trimmed_mean_examples() {
        assert_abs_diff_eq!(trimmed_mean(&[0.7; 10]).unwrap(), 0.7, epsilon = 1e-15);
        let runs: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        assert_abs_diff_eq!(trimmed_mean(&runs).unwrap(), 0.55, epsilon = 1e-12);
        // Permutation invariance.
        let mut shuffled = runs.clone();
        shuffled.reverse();
        shuffled.swap(0, 5);
        assert_abs_diff_eq!(
            trimmed_mean(&shuffled).unwrap(),
            trimmed_mean(&runs).unwrap(),
            epsilon = 1e-15
        );
        assert!(trimmed_mean(&[0.5, 0.6]).is_err());
    }

    fn cluster_instance() -> (Graph, AttributeMatrix, Vec<usize>) {
        // Three 6-cliques in a ring, indicator features.
        let mut edges = Vec::new();
        for cluster in 0..3usize {
            let base = cluster * 6;
            for i in 0..6 {
                for j in (i + 1)..6 {
                    edges.push((base + i, base + j));
                }
            }
        }
        edges.push((0, 6));
        edges.push((6, 12));
        edges.push((5, 17));
        let g = Graph::new(18, edges).unwrap();
        let mut x = Array2::zeros((18, 5));
        let mut labels = vec![0usize; 18];
        for v in 0..18 {
            let cluster = v / 6;
            labels[v] = cluster;
            x[[v, cluster]] = 1.0;
            x[[v, 3]] = 0.2;
            if v % 2 == 0 {
                x[[v, 4]] = 0.1;
            }
        }
        (g, AttributeMatrix::complete(x), labels)
    }

    fn small_experiment_config() -> ExperimentConfig {
        ExperimentConfig {
            alpha: 0.4,
            beta: 0.5,
            split_fraction: 0.5,
            epsilon: 0.1,
            k: 3,
            head_epochs: 40,
            surrogate_epochs: 20,
            target_epochs: 60,
            target_lr: 0.1,
            runs: 4,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn experiment_report_is_paired_and_recomputable() {
        let (g, x, labels) = cluster_instance();
        let cfg = small_experiment_config();
        let report = run_experiment(&g, &x, &labels, &cfg).unwrap();
        assert_eq!(report.clean.runs.len(), 4);
        assert_eq!(report.attacks.rida.runs.len(), 4);
        assert_eq!(report.attacks.dice.runs.len(), 4);
        for arm in [
            &report.clean.runs,
            &report.attacks.rida.runs,
            &report.attacks.dice.runs,
        ] {
            assert!(arm.iter().all(|&a| (0.0..=1.0).contains(&a)));
        }
        assert_abs_diff_eq!(
            report.clean.trimmed_mean,
            trimmed_mean(&report.clean.runs).unwrap(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            report.attacks.rida.trimmed_mean,
            trimmed_mean(&report.attacks.rida.runs).unwrap(),
            epsilon = 1e-15
        );
        // |E| = 48 → budget ⌊48·0.1⌋ = 4.
        assert_eq!(report.attacks.rida.flips, 4);
        assert_eq!(report.attacks.dice.flips, 4);
        assert!(report.timings.contains_key("total_s"));
        assert!(report.timings.contains_key("attack_rida_s"));
        assert!(report.timings.values().all(|&t| t >= 0.0));
        // Identical config → identical accuracy lists (full determinism).
        let again = run_experiment(&g, &x, &labels, &cfg).unwrap();
        assert_eq!(again.clean.runs, report.clean.runs);
        assert_eq!(again.attacks.rida.runs, report.attacks.rida.runs);
        assert_eq!(again.attacks.dice.runs, report.attacks.dice.runs);
        // JSON schema: round-trips and exposes the documented keys.
        let json = serde_json::to_string_pretty(&report).unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["config", "clean", "attacks", "timings"] {
            assert!(value.get(key).is_some(), "missing key {key}");
        }
        assert!(value["attacks"].get("rida").is_some());
        assert!(value["attacks"].get("dice").is_some());
        let parsed: ResultsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed.clean.runs, report.clean.runs);
    }

    #[test]
    fn experiment_reattack_varies_the_attack_per_run() {
        let (g, x, labels) = cluster_instance();
        let cfg = ExperimentConfig {
            reattack: true,
            runs: 3,
            ..small_experiment_config()
        };
        let report = run_experiment(&g, &x, &labels, &cfg).unwrap();
        assert_eq!(report.attacks.rida.runs.len(), 3);
        assert!(report
            .attacks
            .rida
            .runs
            .iter()
            .all(|&a| (0.0..=1.0).contains(&a)));
    }

    #[test]
    fn heatmap_identity_and_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("heatmap.csv");
        let eye = Array2::eye(3);
        export_propagation_heatmap(&eye, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let rows: Vec<Vec<f64>> = text
            .lines()
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows.len(), 3);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 0.0 } else { -12.0 };
                assert!((rows[i][j] - expect).abs() <= 1e-9);
            }
        }
        // Round-trip of an arbitrary non-negative matrix to 1e-9.
        let m = array![[0.5, 0.125], [0.0, 2.0]];
        export_propagation_heatmap(&m, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        for (i, line) in text.lines().enumerate() {
            for (j, field) in line.split(',').enumerate() {
                let parsed: f64 = field.parse().unwrap();
                assert!((parsed - (m[[i, j]] + 1e-12).log10()).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn heatmap_positivity_tracks_reachability() {
        // Path graph, K=3: Aphi blends I, Â, Â² → entry positive iff the
        // hop distance is below K.
        let g = Graph::new(5, [(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
        let hat = normalize_adjacency(&g, false).unwrap();
        let k = 3;
        let t = build_transition_powers(&hat, k).unwrap();
        let aphi = build_propagation_matrix(&t, 0.1, 0.01, k).unwrap();
        let dist = |u: usize, v: usize| (u as i64 - v as i64).unsigned_abs() as usize;
        for u in 0..5 {
            for v in 0..5 {
                let reachable = dist(u, v) < k;
                assert_eq!(
                    aphi[[u, v]] > 0.0,
                    reachable,
                    "entry ({u},{v}) positivity must match hop distance {}",
                    dist(u, v)
                );
            }
        }
    }
}
