//! Holistic adjacency-aware attack: decayed whole-graph propagation
//! matrices, positional attack features, an activation-free two-layer GCN
//! surrogate, analytic gradients through the self-loop degree
//! normalization, and the greedy budgeted edge-flip loop.
//!
//! The attack loss is L_atk = −L_train(f_θ(Ã_m, X_s), Ŷ): minimizing it
//! maximizes the retrained surrogate's training loss. Flip scoring follows
//! the gradient-times-flip-direction rule with the normalization steps
//! (diagonal zeroing, global-minimum subtraction) applied to the score
//! basis first; [`run_attack`] passes the descent direction −∇L_atk (i.e.
//! +∇L_train) as that basis so a maximal score always marks the most
//! damaging feasible flip.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dpgnn::decay;
use crate::error::{Error, Result};
use crate::graphio::{
    normalize_adjacency, AttributeMatrix, Graph, LabeledSplit, NormalizedAdjacency,
};
use crate::nn;

/// Dense transition powers T^(0)..T^(K−1) with T^(k) = Â^{k+1}.
pub fn build_transition_powers(hat_a: &NormalizedAdjacency, k: usize) -> Result<Vec<Array2<f64>>> {
    if k < 1 {
        return Err(Error::validation("transition powers need K ≥ 1"));
    }
    let mut powers = Vec::with_capacity(k);
    powers.push(hat_a.to_dense());
    for _ in 1..k {
        let next = hat_a.mul_dense(powers.last().expect("non-empty"));
        powers.push(next);
    }
    Ok(powers)
}

/// Applies the decayed recursion Aphi^(k) = λ_k·T^(k−1) + (1−λ_k)·Aphi^(k−1)
/// with Aphi^(0) = I and returns Aphi^(K−1). `t` must have been built with
/// the same K.
pub fn build_propagation_matrix(
    t: &[Array2<f64>],
    delta: f64,
    gamma: f64,
    k: usize,
) -> Result<Array2<f64>> {
    if k < 1 {
        return Err(Error::validation("propagation matrix needs K ≥ 1"));
    }
    if t.len() != k {
        return Err(Error::validation(format!(
            "transition list holds {} matrices but K={k}; build both with the same K",
            t.len()
        )));
    }
    let n = t[0].nrows();
    let mut aphi = Array2::eye(n);
    for step in 1..k {
        let lam = decay(step, delta, gamma);
        aphi *= 1.0 - lam;
        aphi.scaled_add(lam, &t[step - 1]);
    }
    Ok(aphi)
}

/// Full trace of both recursions, for oracle tests and inspection.
#[derive(Debug, Clone)]
pub struct PropagationTrace {
    /// T^(0)..T^(K−1).
    pub t: Vec<Array2<f64>>,
    /// Aphi^(0)..Aphi^(K−1).
    pub aphi: Vec<Array2<f64>>,
}

pub fn build_propagation_trace(
    hat_a: &NormalizedAdjacency,
    delta: f64,
    gamma: f64,
    k: usize,
) -> Result<PropagationTrace> {
    let t = build_transition_powers(hat_a, k)?;
    let n = hat_a.n();
    let mut aphi = vec![Array2::eye(n)];
    for step in 1..k {
        let lam = decay(step, delta, gamma);
        let mut next = aphi[step - 1].clone();
        next *= 1.0 - lam;
        next.scaled_add(lam, &t[step - 1]);
        aphi.push(next);
    }
    Ok(PropagationTrace { t, aphi })
}

/// Streaming equivalent of [`build_transition_powers`] +
/// [`build_propagation_matrix`]: holds only the current T^(k) and Aphi^(k)
/// instead of the full K-deep traces. Identical output to 1e−12.
pub fn propagation_matrix_direct(
    hat_a: &NormalizedAdjacency,
    delta: f64,
    gamma: f64,
    k: usize,
) -> Result<Array2<f64>> {
    if k < 1 {
        return Err(Error::validation("propagation matrix needs K ≥ 1"));
    }
    let n = hat_a.n();
    let mut aphi = Array2::eye(n);
    let mut t_prev = hat_a.to_dense();
    for step in 1..k {
        let lam = decay(step, delta, gamma);
        aphi *= 1.0 - lam;
        aphi.scaled_add(lam, &t_prev);
        if step + 1 < k {
            t_prev = hat_a.mul_dense(&t_prev);
        }
    }
    Ok(aphi)
}

/// Positional attack features Xs = η·Aphi·Xn + (1−η)·Xn.
#[derive(Debug, Clone)]
pub struct AttackFeatures {
    pub xs: Array2<f64>,
    pub eta: f64,
}

pub fn optimize_features(
    aphi: &Array2<f64>,
    xn: &Array2<f64>,
    eta: f64,
) -> Result<AttackFeatures> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::validation(format!(
            "eta must lie in [0,1], got {eta}"
        )));
    }
    if aphi.nrows() != aphi.ncols() || aphi.nrows() != xn.nrows() {
        return Err(Error::validation(format!(
            "shape mismatch: Aphi is {}x{}, Xn has {} rows",
            aphi.nrows(),
            aphi.ncols(),
            xn.nrows()
        )));
    }
    let xs = if eta == 0.0 {
        xn.clone()
    } else {
        let mut xs = aphi.dot(xn);
        xs *= eta;
        xs.scaled_add(1.0 - eta, xn);
        xs
    };
    Ok(AttackFeatures { xs, eta })
}

/// Activation-free two-layer surrogate Z = Ã(Ã·Xs·W2)·W1.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateParams {
    /// d × hidden.
    pub w2: Array2<f64>,
    /// hidden × c.
    pub w1: Array2<f64>,
}

impl SurrogateParams {
    pub fn zeros(d: usize, hidden: usize, c: usize) -> SurrogateParams {
        SurrogateParams {
            w2: Array2::zeros((d, hidden)),
            w1: Array2::zeros((hidden, c)),
        }
    }
}

/// Surrogate logits on a candidate adjacency (self-loop normalization
/// applied internally).
pub fn surrogate_logits(
    params: &SurrogateParams,
    am: &Graph,
    xs: &Array2<f64>,
) -> Result<Array2<f64>> {
    let tilde = normalize_adjacency(am, true)?;
    let m = tilde.mul_dense(&tilde.mul_dense(xs));
    Ok(m.dot(&params.w2).dot(&params.w1))
}

fn train_surrogate_loop(
    mut params: SurrogateParams,
    m: &Array2<f64>,
    split: &LabeledSplit,
    epochs: usize,
    lr: f64,
) -> Result<SurrogateParams> {
    for epoch in 0..epochs {
        let h = m.dot(&params.w2);
        let z = h.dot(&params.w1);
        let loss = nn::cross_entropy(&z, &split.labels, &split.train_idx);
        nn::check_finite(loss, epoch)?;
        let dz = nn::cross_entropy_grad(&z, &split.labels, &split.train_idx);
        let dw1 = h.t().dot(&dz);
        let dh = dz.dot(&params.w1.t());
        let dw2 = m.t().dot(&dh);
        params.w1.scaled_add(-lr, &dw1);
        params.w2.scaled_add(-lr, &dw2);
    }
    Ok(params)
}

/// Trains the surrogate from a fresh Glorot initialization on the TRUE
/// labels of the split's train vertices; full-batch gradient descent,
/// deterministic given `seed`.
pub fn train_surrogate(
    am: &Graph,
    xs: &Array2<f64>,
    split: &LabeledSplit,
    epochs: usize,
    lr: f64,
    hidden: usize,
    seed: u64,
) -> Result<SurrogateParams> {
    let tilde = normalize_adjacency(am, true)?;
    let m = tilde.mul_dense(&tilde.mul_dense(xs));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = SurrogateParams {
        w2: nn::glorot_uniform(&mut rng, xs.ncols(), hidden),
        w1: nn::glorot_uniform(&mut rng, hidden, split.c),
    };
    train_surrogate_loop(params, &m, split, epochs, lr)
}

/// Continues training an existing θ on a (possibly updated) adjacency —
/// the warm-start path of the attack loop.
pub fn train_surrogate_from(
    params: SurrogateParams,
    am: &Graph,
    xs: &Array2<f64>,
    split: &LabeledSplit,
    epochs: usize,
    lr: f64,
) -> Result<SurrogateParams> {
    let tilde = normalize_adjacency(am, true)?;
    let m = tilde.mul_dense(&tilde.mul_dense(xs));
    train_surrogate_loop(params, &m, split, epochs, lr)
}

/// L_atk = −L_train evaluated on a dense, possibly non-binary raw adjacency
/// (degrees from row sums of Am+I). The finite-difference oracle perturbs
/// single raw entries through this path.
pub fn attack_loss_dense(
    params: &SurrogateParams,
    am: &Array2<f64>,
    xs: &Array2<f64>,
    target_labels: &[usize],
) -> f64 {
    let n = am.nrows();
    let mut inv_sqrt = vec![0.0; n];
    for i in 0..n {
        let deg = 1.0 + am.row(i).sum();
        inv_sqrt[i] = deg.powf(-0.5);
    }
    let mut tilde = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let a = am[[i, j]] + if i == j { 1.0 } else { 0.0 };
            if a != 0.0 {
                tilde[[i, j]] = a * inv_sqrt[i] * inv_sqrt[j];
            }
        }
    }
    let b = xs.dot(&params.w2).dot(&params.w1);
    let z = tilde.dot(&tilde.dot(&b));
    let all: Vec<usize> = (0..n).collect();
    -nn::cross_entropy(&z, target_labels, &all)
}

/// Analytic ∂L_atk/∂Am over the raw (directed-entry) adjacency, chained
/// through both the numerator and the two degree factors of
/// Ã_m = D̄^{−1/2}(Am+I)D̄^{−1/2}. Not yet symmetrized.
pub fn attack_gradient_raw(
    params: &SurrogateParams,
    am: &Graph,
    xs: &Array2<f64>,
    target_labels: &[usize],
) -> Result<Array2<f64>> {
    let n = am.n();
    if target_labels.len() != n {
        return Err(Error::validation(format!(
            "target labels cover {} vertices, graph has {n}",
            target_labels.len()
        )));
    }
    let tilde = normalize_adjacency(am, true)?;
    let b = xs.dot(&params.w2).dot(&params.w1);
    let u = tilde.mul_dense(&b);
    let z = tilde.mul_dense(&u);
    // dL_atk/dZ = −(softmax − onehot)/n over all vertices.
    let all: Vec<usize> = (0..n).collect();
    let mut s = nn::cross_entropy_grad(&z, target_labels, &all);
    s *= -1.0;
    // dL/dÃ = S·(ÃB)ᵀ + Ã·S·Bᵀ (Ã symmetric at the evaluation point).
    let mut g_tilde = s.dot(&u.t());
    g_tilde += &tilde.mul_dense(&s).dot(&b.t());
    // Chain through the normalization: perturbing raw entry (u,v) moves the
    // (u,v) numerator and, via row-sum degree d_u, rescales row u and
    // column u of Ã.
    let mut inv_sqrt = vec![0.0; n];
    let mut inv_deg = vec![0.0; n];
    for i in 0..n {
        let deg = (am.degree(i) + 1) as f64;
        inv_sqrt[i] = deg.powf(-0.5);
        inv_deg[i] = 1.0 / deg;
    }
    // row_dot[u] = Σ_j G̃_uj·Ã_uj, col_dot[u] = Σ_i G̃_iu·Ã_iu.
    let mut row_dot = vec![0.0; n];
    let mut col_dot = vec![0.0; n];
    for i in 0..n {
        for &(j, w) in tilde.row(i) {
            row_dot[i] += g_tilde[[i, j]] * w;
            col_dot[j] += g_tilde[[i, j]] * w;
        }
    }
    let mut raw = Array2::zeros((n, n));
    for u_idx in 0..n {
        let degree_term = 0.5 * inv_deg[u_idx] * (row_dot[u_idx] + col_dot[u_idx]);
        for v_idx in 0..n {
            raw[[u_idx, v_idx]] =
                g_tilde[[u_idx, v_idx]] * inv_sqrt[u_idx] * inv_sqrt[v_idx] - degree_term;
        }
    }
    Ok(raw)
}

/// Symmetrized attack gradient G ← (G_raw + G_rawᵀ)/2 (one unordered flip
/// touches both raw entries).
pub fn attack_gradient(
    params: &SurrogateParams,
    am: &Graph,
    xs: &Array2<f64>,
    target_labels: &[usize],
) -> Result<Array2<f64>> {
    let raw = attack_gradient_raw(params, am, xs, target_labels)?;
    let mut sym = Array2::zeros((am.n(), am.n()));
    for i in 0..am.n() {
        for j in 0..am.n() {
            sym[[i, j]] = 0.5 * (raw[[i, j]] + raw[[j, i]]);
        }
    }
    Ok(sym)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipAction {
    Add,
    Del,
}

impl std::fmt::Display for FlipAction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FlipAction::Add => "ADD",
            FlipAction::Del => "DEL",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flip {
    pub u: usize,
    pub v: usize,
    pub action: FlipAction,
}

/// Bookkeeping for the greedy loop: applied flips in order, the flipped-pair
/// set, and the budget counters. The perturbation matrix Ap is implied:
/// +1 for ADD flips, −1 for DEL flips, 0 elsewhere.
#[derive(Debug, Clone)]
pub struct PerturbationState {
    n: usize,
    flips: Vec<Flip>,
    flipped: BTreeSet<(usize, usize)>,
    budget_total: usize,
}

impl PerturbationState {
    pub fn new(n: usize, budget_total: usize) -> PerturbationState {
        PerturbationState {
            n,
            flips: Vec::new(),
            flipped: BTreeSet::new(),
            budget_total,
        }
    }

    pub fn budget_total(&self) -> usize {
        self.budget_total
    }

    pub fn budget_used(&self) -> usize {
        self.flips.len()
    }

    pub fn flips(&self) -> &[Flip] {
        &self.flips
    }

    pub fn is_flipped(&self, u: usize, v: usize) -> bool {
        self.flipped.contains(&(u.min(v), u.max(v)))
    }

    fn record(&mut self, flip: Flip) {
        debug_assert!(flip.u < flip.v);
        debug_assert!(!self.is_flipped(flip.u, flip.v));
        debug_assert!(self.budget_used() < self.budget_total);
        self.flipped.insert((flip.u, flip.v));
        self.flips.push(flip);
    }

    /// The dense perturbation matrix Ap with entries in {−1, 0, +1}.
    pub fn ap_dense(&self) -> Array2<f64> {
        let mut ap = Array2::zeros((self.n, self.n));
        for flip in &self.flips {
            let value = match flip.action {
                FlipAction::Add => 1.0,
                FlipAction::Del => -1.0,
            };
            ap[[flip.u, flip.v]] = value;
            ap[[flip.v, flip.u]] = value;
        }
        ap
    }
}

fn feasible_selection(
    score_basis: &Array2<f64>,
    current: &Graph,
    state: &PerturbationState,
) -> Option<(usize, usize, FlipAction)> {
    let n = current.n();
    // Normalization steps on the score basis: zero the diagonal, then shift
    // by the global minimum so every score is non-negative.
    let mut min = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            let g = if i == j { 0.0 } else { score_basis[[i, j]] };
            if g < min {
                min = g;
            }
        }
    }
    let mut best: Option<(f64, usize, usize, FlipAction)> = None;
    for u in 0..n {
        for v in (u + 1)..n {
            if state.is_flipped(u, v) {
                continue;
            }
            let has_edge = current.has_edge(u, v);
            let action = if has_edge { FlipAction::Del } else { FlipAction::Add };
            if has_edge && (current.degree(u) < 2 || current.degree(v) < 2) {
                continue;
            }
            let shifted = score_basis[[u, v]] - min;
            let score = shifted * if has_edge { -1.0 } else { 1.0 };
            match best {
                Some((s, ..)) if score <= s => {}
                _ => best = Some((score, u, v, action)),
            }
        }
    }
    best.map(|(_, u, v, action)| (u, v, action))
}

/// One greedy selection step: the feasible unordered pair maximizing
/// S(u,v) = G″(u,v)·(1−2·A_cur(u,v)), where G″ is the score basis after
/// diagonal zeroing and global-minimum subtraction. Ties go to the
/// lexicographically smallest pair; exhaustion is an error (the attack loop
/// converts it into a partial-result warning).
pub fn select_perturbation(
    score_basis: &Array2<f64>,
    current: &Graph,
    state: &PerturbationState,
) -> Result<(usize, usize, FlipAction)> {
    if state.budget_used() >= state.budget_total() {
        return Err(Error::validation("perturbation budget already exhausted"));
    }
    feasible_selection(score_basis, current, state)
        .ok_or_else(|| Error::validation("no feasible flip remains"))
}

/// Attack hyperparameters. `delta`/`gamma`/`k` drive the Aphi recursion for
/// the positional features; `eta` blends them; the surrogate settings and
/// seed drive the per-iteration retraining.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub eta: f64,
    pub delta: f64,
    pub gamma: f64,
    pub k: usize,
    pub surrogate_epochs: usize,
    pub surrogate_lr: f64,
    pub hidden: usize,
    pub warm_start: bool,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            eta: 0.05,
            delta: 0.1,
            gamma: 0.01,
            k: 16,
            surrogate_epochs: 100,
            surrogate_lr: 0.01,
            hidden: 16,
            warm_start: false,
            seed: 0,
        }
    }
}

/// Warm-start iterations reuse the incumbent θ and train for a fifth of the
/// configured epochs (at least one).
fn warm_epochs(epochs: usize) -> usize {
    (epochs / 5).max(1)
}

/// Result of a budgeted attack: the bookkeeping state, the perturbed graph,
/// and a warning when the budget could not be fully spent.
#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub state: PerturbationState,
    pub graph: Graph,
    pub warning: Option<String>,
}

/// The greedy poisoning loop. Per iteration: retrain the surrogate on the
/// current adjacency (fresh seed `cfg.seed + iteration`, or warm-started),
/// compute the symmetrized attack gradient, score flips on the descent
/// direction −∇L_atk, and apply the best feasible flip.
pub fn run_attack(
    g: &Graph,
    x_phi: &AttributeMatrix,
    split: &LabeledSplit,
    pseudo_labels: &[usize],
    epsilon: f64,
    cfg: &AttackConfig,
) -> Result<AttackOutcome> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::validation(format!(
            "epsilon must lie in (0,1), got {epsilon}"
        )));
    }
    if pseudo_labels.len() != g.n() {
        return Err(Error::validation(format!(
            "pseudo-labels cover {} vertices, graph has {}",
            pseudo_labels.len(),
            g.n()
        )));
    }
    let budget = (g.edge_count() as f64 * epsilon).floor() as usize;
    let mut state = PerturbationState::new(g.n(), budget);
    if budget == 0 {
        return Ok(AttackOutcome {
            state,
            graph: g.clone(),
            warning: None,
        });
    }

    // Positional features from the clean graph, fixed across the loop.
    let xn = crate::graphio::row_normalize_attributes(x_phi).values;
    let hat_a = normalize_adjacency(g, false)?;
    let aphi = propagation_matrix_direct(&hat_a, cfg.delta, cfg.gamma, cfg.k)?;
    let xs = optimize_features(&aphi, &xn, cfg.eta)?.xs;

    // Attack targets: pseudo-labels everywhere, true labels where known.
    let mut target_labels = pseudo_labels.to_vec();
    for &v in &split.train_idx {
        target_labels[v] = split.labels[v];
    }

    let mut edges: BTreeSet<(usize, usize)> = g.edges().iter().copied().collect();
    let mut theta: Option<SurrogateParams> = None;
    let mut warning = None;
    for iteration in 0..budget {
        let current = Graph::new(g.n(), edges.iter().copied())
            .expect("flip bookkeeping preserves graph validity");
        let seed = cfg.seed.wrapping_add(iteration as u64);
        let trained = match (cfg.warm_start, theta.take()) {
            (true, Some(prev)) => train_surrogate_from(
                prev,
                &current,
                &xs,
                split,
                warm_epochs(cfg.surrogate_epochs),
                cfg.surrogate_lr,
            )?,
            _ => train_surrogate(
                &current,
                &xs,
                split,
                cfg.surrogate_epochs,
                cfg.surrogate_lr,
                cfg.hidden,
                seed,
            )?,
        };
        let grad = attack_gradient(&trained, &current, &xs, &target_labels)?;
        theta = Some(trained);
        // Descent direction of L_atk = ascent direction of the training loss.
        let descent = grad.mapv(|x| -x);
        match feasible_selection(&descent, &current, &state) {
            Some((u, v, action)) => {
                match action {
                    FlipAction::Add => {
                        edges.insert((u, v));
                    }
                    FlipAction::Del => {
                        edges.remove(&(u, v));
                    }
                }
                state.record(Flip { u, v, action });
            }
            None => {
                warning = Some(format!(
                    "budget exhausted early: no feasible flip after {} of {budget} perturbations",
                    state.budget_used()
                ));
                break;
            }
        }
    }
    let graph = Graph::new(g.n(), edges.iter().copied())
        .expect("flip bookkeeping preserves graph validity");
    Ok(AttackOutcome {
        state,
        graph,
        warning,
    })
}

/// Writes the perturbation diff: one "ADD u v" / "DEL u v" line per flip in
/// application order, u < v.
pub fn save_diff(flips: &[Flip], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for flip in flips {
        writeln!(w, "{} {} {}", flip.action, flip.u, flip.v).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Parses a perturbation diff file.
pub fn load_diff(path: &Path) -> Result<Vec<Flip>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut flips = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 3 {
            return Err(Error::parse(path, lineno, "expected 'ADD u v' or 'DEL u v'"));
        }
        let action = match fields[0] {
            "ADD" => FlipAction::Add,
            "DEL" => FlipAction::Del,
            other => {
                return Err(Error::parse(path, lineno, format!("unknown action '{other}'")))
            }
        };
        let u: usize = fields[1]
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("invalid id '{}'", fields[1])))?;
        let v: usize = fields[2]
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("invalid id '{}'", fields[2])))?;
        if u >= v {
            return Err(Error::parse(path, lineno, "diff lines require u < v"));
        }
        flips.push(Flip { u, v, action });
    }
    Ok(flips)
}

/// Replays a diff onto a graph: ADD requires the edge absent, DEL requires
/// it present.
pub fn apply_diff(g: &Graph, flips: &[Flip]) -> Result<Graph> {
    let mut edges: BTreeSet<(usize, usize)> = g.edges().iter().copied().collect();
    for flip in flips {
        if flip.u >= g.n() || flip.v >= g.n() {
            return Err(Error::validation(format!(
                "diff flip ({},{}) out of range for n={}",
                flip.u,
                flip.v,
                g.n()
            )));
        }
        let pair = (flip.u, flip.v);
        match flip.action {
            FlipAction::Add => {
                if !edges.insert(pair) {
                    return Err(Error::validation(format!(
                        "diff ADD {} {} but the edge already exists",
                        flip.u, flip.v
                    )));
                }
            }
            FlipAction::Del => {
                if !edges.remove(&pair) {
                    return Err(Error::validation(format!(
                        "diff DEL {} {} but the edge is absent",
                        flip.u, flip.v
                    )));
                }
            }
        }
    }
    Graph::new(g.n(), edges)
}
