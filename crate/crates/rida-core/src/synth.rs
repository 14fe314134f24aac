//! Seeded synthetic citation-style datasets.
//!
//! The reproduction datasets are generated rather than downloaded: the
//! sandbox has no network access, so each profile below mirrors the shape
//! statistics of its namesake (vertex/edge/attribute/class counts of the
//! largest-connected-component versions) and is calibrated so the clean
//! target-model accuracy lands near its namesake's benchmark value.
//! Generation is fully deterministic given the seed.
//!
//! Construction: class sizes by largest-remainder apportionment → labels
//! shuffled over vertex ids → a random spanning tree with class-biased
//! attachment (guaranteeing connectivity) → extra homophilous edges up to
//! the exact edge count → term-count attributes where most vertices carry
//! one dominant topic term from a narrow per-class window plus low-count
//! chatter words from a shared pool, a minority carry no topic term at
//! all (classifiable only through the graph), and a small fraction sample
//! a wrong topic entirely.

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graphio::{AttributeMatrix, Graph};

/// Shape statistics plus difficulty knobs for one synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticProfile {
    pub name: &'static str,
    pub n: usize,
    pub edges: usize,
    pub d: usize,
    pub c: usize,
    /// Relative class sizes (apportioned to exactly `n` vertices).
    pub class_weights: &'static [f64],
    /// Probability that an edge endpoint pair is sampled same-class.
    pub homophily: f64,
    /// Shared-pool word draws per vertex (count 1 each; distinct words may
    /// be fewer when draws collide).
    pub words_per_vertex: usize,
    /// Probability the vertex carries a topic term at all; vertices
    /// without one are only classifiable through their neighborhoods.
    pub own_topic_prob: f64,
    /// Count stored for the topic term. Chatter words store count 1, so
    /// this sets both how dominant the term is after row normalization and
    /// the raw feature scale seen by the evaluation model.
    pub word_value: f64,
    /// Fraction of vertices whose words are drawn from a wrong topic.
    pub feature_confusion: f64,
    /// Vocabulary ids [0, shared_pool) form the class-agnostic pool.
    pub shared_pool: usize,
    /// Width of each class's topic window.
    pub topic_width: usize,
    /// Overlap between consecutive class windows.
    pub topic_overlap: usize,
}

pub const CORA: SyntheticProfile = SyntheticProfile {
    name: "cora",
    n: 2485,
    edges: 5069,
    d: 1433,
    c: 7,
    class_weights: &[0.30, 0.16, 0.15, 0.13, 0.11, 0.08, 0.07],
    homophily: 0.81,
    words_per_vertex: 3,
    own_topic_prob: 0.45,
    word_value: 128.0,
    feature_confusion: 0.16,
    shared_pool: 350,
    topic_width: 2,
    topic_overlap: 0,
};

pub const CITESEER: SyntheticProfile = SyntheticProfile {
    name: "citeseer",
    n: 2110,
    edges: 3757,
    d: 3703,
    c: 6,
    class_weights: &[0.25, 0.21, 0.19, 0.15, 0.12, 0.08],
    homophily: 0.74,
    words_per_vertex: 4,
    own_topic_prob: 0.35,
    word_value: 128.0,
    feature_confusion: 0.20,
    shared_pool: 1000,
    topic_width: 2,
    topic_overlap: 0,
};

pub const CORA_ML: SyntheticProfile = SyntheticProfile {
    name: "cora-ml",
    n: 2810,
    edges: 7981,
    d: 2879,
    c: 7,
    class_weights: &[0.29, 0.17, 0.15, 0.13, 0.11, 0.08, 0.07],
    homophily: 0.79,
    words_per_vertex: 3,
    own_topic_prob: 0.40,
    word_value: 128.0,
    feature_confusion: 0.22,
    shared_pool: 700,
    topic_width: 2,
    topic_overlap: 0,
};

/// Profile lookup by dataset name.
pub fn profile(name: &str) -> Option<&'static SyntheticProfile> {
    match name {
        "cora" => Some(&CORA),
        "citeseer" => Some(&CITESEER),
        "cora-ml" => Some(&CORA_ML),
        _ => None,
    }
}

fn validate(p: &SyntheticProfile) -> Result<()> {
    if p.class_weights.len() != p.c || p.c < 2 {
        return Err(Error::validation("profile weights must cover c ≥ 2 classes"));
    }
    if p.edges < p.n.saturating_sub(1) {
        return Err(Error::validation(
            "profile needs at least n−1 edges for connectivity",
        ));
    }
    if p.edges > p.n * (p.n - 1) / 2 {
        return Err(Error::validation("profile edge count exceeds simple-graph maximum"));
    }
    if p.topic_overlap >= p.topic_width {
        return Err(Error::validation("topic overlap must be below topic width"));
    }
    let vocab_needed =
        p.shared_pool + p.topic_width + (p.c - 1) * (p.topic_width - p.topic_overlap);
    if vocab_needed > p.d {
        return Err(Error::validation(format!(
            "profile vocabulary layout needs {vocab_needed} words but d={}",
            p.d
        )));
    }
    if p.words_per_vertex == 0 {
        return Err(Error::validation("profile needs at least one word per vertex"));
    }
    if !(p.word_value.is_finite() && p.word_value > 0.0) {
        return Err(Error::validation("word value must be positive and finite"));
    }
    for knob in [
        p.homophily,
        p.own_topic_prob,
        p.feature_confusion,
    ] {
        if !(0.0..=1.0).contains(&knob) {
            return Err(Error::validation("profile probabilities must lie in [0,1]"));
        }
    }
    Ok(())
}

/// Largest-remainder apportionment of `n` vertices to the class weights,
/// with every class guaranteed at least one vertex.
fn class_counts(p: &SyntheticProfile) -> Vec<usize> {
    let total: f64 = p.class_weights.iter().sum();
    let exact: Vec<f64> = p
        .class_weights
        .iter()
        .map(|w| w / total * p.n as f64)
        .collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| (e.floor() as usize).max(1)).collect();
    let mut order: Vec<usize> = (0..p.c).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    let mut assigned: usize = counts.iter().sum();
    let mut cursor = 0;
    while assigned < p.n {
        counts[order[cursor % p.c]] += 1;
        assigned += 1;
        cursor += 1;
    }
    while assigned > p.n {
        // Only possible when the max(1) floor over-assigned; shave the
        // largest classes.
        let biggest = (0..p.c).max_by_key(|&i| counts[i]).unwrap();
        counts[biggest] -= 1;
        assigned -= 1;
    }
    counts
}

fn topic_window_start(p: &SyntheticProfile, topic: usize) -> usize {
    p.shared_pool + topic * (p.topic_width - p.topic_overlap)
}

/// Generates one dataset. Deterministic given `seed`; the graph is
/// connected with exactly the profile's edge count, and the attribute
/// matrix is fully observed with binary bag-of-words rows.
pub fn generate(
    p: &SyntheticProfile,
    seed: u64,
) -> Result<(Graph, AttributeMatrix, Vec<usize>)> {
    validate(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = class_counts(p);
    let mut labels = Vec::with_capacity(p.n);
    for (class, &count) in counts.iter().enumerate() {
        labels.extend(std::iter::repeat(class).take(count));
    }
    labels.shuffle(&mut rng);

    // Spanning tree with class-biased attachment.
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut earlier_by_class: Vec<Vec<usize>> = vec![Vec::new(); p.c];
    earlier_by_class[labels[0]].push(0);
    for v in 1..p.n {
        let lv = labels[v];
        let same = &earlier_by_class[lv];
        let want_same = rng.gen_bool(p.homophily);
        let u = if want_same && !same.is_empty() {
            same[rng.gen_range(0..same.len())]
        } else if !want_same && v > same.len() {
            // A different-class earlier vertex exists; rejection-sample it.
            loop {
                let cand = rng.gen_range(0..v);
                if labels[cand] != lv {
                    break cand;
                }
            }
        } else {
            rng.gen_range(0..v)
        };
        edges.insert((u.min(v), u.max(v)));
        earlier_by_class[lv].push(v);
    }

    // Extra edges up to the exact count, homophily-biased.
    let by_class = earlier_by_class;
    let mut attempts = 0usize;
    let attempt_cap = 200 * p.edges.max(1);
    while edges.len() < p.edges && attempts < attempt_cap {
        attempts += 1;
        let u = rng.gen_range(0..p.n);
        let lu = labels[u];
        let same = rng.gen_bool(p.homophily);
        let w = if same {
            let pool = &by_class[lu];
            pool[rng.gen_range(0..pool.len())]
        } else {
            loop {
                let cand = rng.gen_range(0..p.n);
                if labels[cand] != lu {
                    break cand;
                }
            }
        };
        if u != w {
            edges.insert((u.min(w), u.max(w)));
        }
    }
    if edges.len() < p.edges {
        // Pathological saturation: deterministically top up with the first
        // free pairs. Unreachable for the built-in profiles.
        'fill: for u in 0..p.n {
            for v in (u + 1)..p.n {
                if edges.len() >= p.edges {
                    break 'fill;
                }
                edges.insert((u, v));
            }
        }
    }
    let graph = Graph::new(p.n, edges)?;

    // Bag-of-words attributes.
    let mut values = Array2::zeros((p.n, p.d));
    for v in 0..p.n {
        let mut topic = labels[v];
        if rng.gen_bool(p.feature_confusion) {
            let mut other = rng.gen_range(0..p.c - 1);
            if other >= topic {
                other += 1;
            }
            topic = other;
        }
        let start = topic_window_start(p, topic);
        if rng.gen_bool(p.own_topic_prob) {
            let term = start + rng.gen_range(0..p.topic_width);
            values[[v, term]] = p.word_value;
        } else {
            values[[v, rng.gen_range(0..p.shared_pool)]] = 1.0;
        }
        for _ in 0..p.words_per_vertex {
            values[[v, rng.gen_range(0..p.shared_pool)]] = 1.0;
        }
    }

    Ok((graph, AttributeMatrix::complete(values), labels))
}
