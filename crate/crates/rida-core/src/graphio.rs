//! Attributed-graph containers, TSV dataset I/O, largest-connected-component
//! extraction, symmetric adjacency normalization, and the labeled split.
//!
//! File formats (all LF-terminated, tab-separated, 0-based ids):
//!
//! * `edges.tsv` — one `u<TAB>v` line per undirected edge with `u < v`,
//!   no header.
//! * `attrs.tsv` — header `n<TAB>d`, then sparse triplets
//!   `v<TAB>j<TAB>value` for the nonzero observed entries.
//! * `labels.tsv` — `v<TAB>label`, exactly one line per vertex,
//!   labels in `0..c−1`.
//! * `mask.tsv` — `v<TAB>j` lines enumerating *missing* entries
//!   (written/consumed by [`crate::missingness`]).

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Labels = Vec<usize>;

/// Undirected simple graph. Edges are canonicalized to `u < v`, stored
/// sorted, with sorted adjacency lists alongside.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from unordered vertex pairs, rejecting self-loops,
    /// out-of-range ids, and duplicate pairs (in either orientation).
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Graph> {
        let mut canon: Vec<(usize, usize)> = Vec::new();
        for (u, v) in edges {
            if u == v {
                return Err(Error::validation(format!("self-loop at vertex {u}")));
            }
            if u >= n || v >= n {
                return Err(Error::validation(format!(
                    "edge ({u},{v}) out of range for n={n}"
                )));
            }
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        if let Some(w) = canon.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::validation(format!(
                "duplicate edge ({},{})",
                w[0].0, w[0].1
            )));
        }
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in &canon {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Ok(Graph {
            n,
            edges: canon,
            adj,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges sorted lexicographically, each with `u < v`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].binary_search(&v).is_ok()
    }
}

/// Dense attribute matrix plus its observation mask (`true` = observed).
/// Unobserved entries are stored as exactly 0.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeMatrix {
    pub values: Array2<f64>,
    pub mask: Array2<bool>,
}

impl AttributeMatrix {
    /// Wraps a fully-observed matrix.
    pub fn complete(values: Array2<f64>) -> AttributeMatrix {
        let mask = Array2::from_elem(values.raw_dim(), true);
        AttributeMatrix { values, mask }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn missing_count(&self) -> usize {
        self.mask.iter().filter(|&&m| !m).count()
    }

    pub fn is_fully_observed(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopVariant {
    WithSelfLoops,
    WithoutSelfLoops,
}

/// Symmetric degree-normalized adjacency in sparse row form:
/// `D̄^{−1/2}(A+I)D̄^{−1/2}` (with loops) or `D^{−1/2}·A·D^{−1/2}`
/// (without). Rows hold `(column, weight)` sorted by column.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    variant: LoopVariant,
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl NormalizedAdjacency {
    pub fn variant(&self) -> LoopVariant {
        self.variant
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, u: usize) -> &[(usize, f64)] {
        &self.rows[u]
    }

    pub fn entry(&self, u: usize, v: usize) -> f64 {
        match self.rows[u].binary_search_by_key(&v, |&(c, _)| c) {
            Ok(i) => self.rows[u][i].1,
            Err(_) => 0.0,
        }
    }

    /// Sparse-dense product `self · x`.
    pub fn mul_dense(&self, x: &Array2<f64>) -> Array2<f64> {
        let d = x.ncols();
        let mut out = Array2::zeros((self.n, d));
        for (u, row) in self.rows.iter().enumerate() {
            for &(v, w) in row {
                for j in 0..d {
                    out[[u, j]] += w * x[[v, j]];
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for (u, row) in self.rows.iter().enumerate() {
            for &(v, w) in row {
                out[[u, v]] = w;
            }
        }
        out
    }
}

/// Symmetric normalization of a graph's adjacency. Without self-loops every
/// vertex must have degree ≥ 1; an isolated vertex is a degenerate-degree
/// validation error.
pub fn normalize_adjacency(g: &Graph, self_loops: bool) -> Result<NormalizedAdjacency> {
    let n = g.n();
    let mut inv_sqrt = vec![0.0; n];
    for v in 0..n {
        let d = g.degree(v) + usize::from(self_loops);
        if d == 0 {
            return Err(Error::validation(format!(
                "degenerate degree: vertex {v} is isolated and self_loops=false"
            )));
        }
        inv_sqrt[v] = 1.0 / (d as f64).sqrt();
    }
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for u in 0..n {
        if self_loops {
            rows[u].push((u, inv_sqrt[u] * inv_sqrt[u]));
        }
        for &v in g.neighbors(u) {
            rows[u].push((v, inv_sqrt[u] * inv_sqrt[v]));
        }
        rows[u].sort_unstable_by_key(|&(c, _)| c);
    }
    Ok(NormalizedAdjacency {
        variant: if self_loops {
            LoopVariant::WithSelfLoops
        } else {
            LoopVariant::WithoutSelfLoops
        },
        n,
        rows,
    })
}

/// Train/test split over all vertices with per-vertex class labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSplit {
    pub labels: Labels,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub c: usize,
}

/// Uniformly random labeled/unlabeled split driven only by `seed`.
/// `|train_idx| = round(fraction·n)` (half up); both index lists are sorted.
pub fn split_labels(labels: &[usize], fraction: f64, seed: u64) -> Result<LabeledSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::validation(format!(
            "split fraction must lie in (0,1), got {fraction}"
        )));
    }
    let n = labels.len();
    let t = (fraction * n as f64).round() as usize;
    if t == 0 || t >= n {
        return Err(Error::validation(format!(
            "split of {n} vertices at fraction {fraction} leaves train={t}; both sides must be non-empty"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut train_idx: Vec<usize> = order[..t].to_vec();
    let mut test_idx: Vec<usize> = order[t..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let c = labels.iter().max().map_or(0, |&m| m + 1);
    Ok(LabeledSplit {
        labels: labels.to_vec(),
        train_idx,
        test_idx,
        c,
    })
}

/// Row-wise L1 normalization over observed entries: each row is divided by
/// the sum of absolute values of its observed entries; rows whose observed
/// sum is 0 stay all-zero. The mask is unchanged.
pub fn row_normalize_attributes(x: &AttributeMatrix) -> AttributeMatrix {
    let mut values = x.values.clone();
    for i in 0..x.n() {
        let mut s = 0.0;
        for j in 0..x.d() {
            if x.mask[[i, j]] {
                s += x.values[[i, j]].abs();
            }
        }
        if s > 0.0 {
            for j in 0..x.d() {
                values[[i, j]] /= s;
            }
        }
    }
    AttributeMatrix {
        values,
        mask: x.mask.clone(),
    }
}

/// Induced subgraph on the largest connected component, vertices re-indexed
/// by ascending original id; attributes and labels are permuted to match.
/// Ties between equal-size components keep the one containing the smallest
/// original id.
pub fn largest_connected_component(
    g: &Graph,
    x: &AttributeMatrix,
    y: &[usize],
) -> (Graph, AttributeMatrix, Labels) {
    let n = g.n();
    let mut comp = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut queue = std::collections::VecDeque::from([start]);
        comp[start] = id;
        let mut size = 0usize;
        while let Some(u) = queue.pop_front() {
            size += 1;
            for &v in g.neighbors(u) {
                if comp[v] == usize::MAX {
                    comp[v] = id;
                    queue.push_back(v);
                }
            }
        }
        sizes.push(size);
    }
    // Seeds are visited in ascending id order, so the first component of
    // maximal size is automatically the one with the smallest member id.
    let best = sizes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let keep: Vec<usize> = (0..n).filter(|&v| comp[v] == best).collect();
    let mut new_id = vec![usize::MAX; n];
    for (i, &v) in keep.iter().enumerate() {
        new_id[v] = i;
    }
    let edges = g
        .edges()
        .iter()
        .filter(|&&(u, v)| comp[u] == best && comp[v] == best)
        .map(|&(u, v)| (new_id[u], new_id[v]));
    let sub = Graph::new(keep.len(), edges).expect("induced subgraph of a valid graph is valid");
    let mut values = Array2::zeros((keep.len(), x.d()));
    let mut mask = Array2::from_elem((keep.len(), x.d()), true);
    let mut labels = Vec::with_capacity(keep.len());
    for (i, &v) in keep.iter().enumerate() {
        for j in 0..x.d() {
            values[[i, j]] = x.values[[v, j]];
            mask[[i, j]] = x.mask[[v, j]];
        }
        labels.push(y[v]);
    }
    (sub, AttributeMatrix { values, mask }, labels)
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = std::io::Result<String>>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file).lines())
}

fn parse_id(path: &Path, lineno: usize, field: &str, what: &str) -> Result<usize> {
    field
        .parse::<usize>()
        .map_err(|_| Error::parse(path, lineno, format!("invalid {what} '{field}'")))
}

/// Loads `edges.tsv`, `attrs.tsv`, and `labels.tsv` from `dir`.
/// Duplicate edges, self-loops, and out-of-range ids are rejected.
/// Reads an edge list in the edges.tsv format ("u<TAB>v", u < v) into a
/// graph over `n` vertices.
pub fn load_edges(path: &Path, n: usize) -> Result<Graph> {
    let mut edges = Vec::new();
    for (idx, line) in open_lines(path)?.enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::parse(path, lineno, "expected u<TAB>v"));
        }
        let u = parse_id(path, lineno, fields[0], "vertex id")?;
        let v = parse_id(path, lineno, fields[1], "vertex id")?;
        if u == v {
            return Err(Error::validation(format!(
                "{}:{lineno}: self-loop at vertex {u}",
                path.display()
            )));
        }
        if u > v {
            return Err(Error::validation(format!(
                "{}:{lineno}: edges must satisfy u < v, got {u} > {v}",
                path.display()
            )));
        }
        edges.push((u, v));
    }
    Graph::new(n, edges)
}

/// Writes a graph's edge list in the edges.tsv format (sorted, u < v).
pub fn save_edges(g: &Graph, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for &(u, v) in g.edges() {
        writeln!(w, "{u}\t{v}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_dataset(dir: &Path) -> Result<(Graph, AttributeMatrix, Labels)> {
    // attrs.tsv first: its header carries n and d.
    let attrs_path = dir.join("attrs.tsv");
    let mut lines = open_lines(&attrs_path)?;
    let header = match lines.next() {
        Some(line) => line.map_err(|e| Error::io(&attrs_path, e))?,
        None => return Err(Error::parse(&attrs_path, 1, "missing n<TAB>d header")),
    };
    let mut it = header.split('\t');
    let (n, d) = match (it.next(), it.next(), it.next()) {
        (Some(a), Some(b), None) => (
            parse_id(&attrs_path, 1, a, "vertex count")?,
            parse_id(&attrs_path, 1, b, "attribute count")?,
        ),
        _ => return Err(Error::parse(&attrs_path, 1, "header must be n<TAB>d")),
    };
    let mut values = Array2::zeros((n, d));
    let mut seen = Array2::from_elem((n, d), false);
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line.map_err(|e| Error::io(&attrs_path, e))?;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                &attrs_path,
                lineno,
                "expected v<TAB>j<TAB>value",
            ));
        }
        let v = parse_id(&attrs_path, lineno, fields[0], "vertex id")?;
        let j = parse_id(&attrs_path, lineno, fields[1], "attribute index")?;
        let value: f64 = fields[2]
            .parse()
            .map_err(|_| Error::parse(&attrs_path, lineno, format!("invalid value '{}'", fields[2])))?;
        if v >= n || j >= d {
            return Err(Error::validation(format!(
                "attrs.tsv:{lineno}: entry ({v},{j}) out of range for {n}x{d}"
            )));
        }
        if !value.is_finite() {
            return Err(Error::validation(format!(
                "attrs.tsv:{lineno}: non-finite value"
            )));
        }
        if value == 0.0 {
            return Err(Error::validation(format!(
                "attrs.tsv:{lineno}: explicit zero entry; the format stores nonzero entries only"
            )));
        }
        if seen[[v, j]] {
            return Err(Error::validation(format!(
                "attrs.tsv:{lineno}: duplicate entry ({v},{j})"
            )));
        }
        seen[[v, j]] = true;
        values[[v, j]] = value;
    }

    let graph = load_edges(&dir.join("edges.tsv"), n)?;

    let labels_path = dir.join("labels.tsv");
    let mut labels = vec![usize::MAX; n];
    for (idx, line) in open_lines(&labels_path)?.enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(&labels_path, e))?;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::parse(&labels_path, lineno, "expected v<TAB>label"));
        }
        let v = parse_id(&labels_path, lineno, fields[0], "vertex id")?;
        let label = parse_id(&labels_path, lineno, fields[1], "label")?;
        if v >= n {
            return Err(Error::validation(format!(
                "labels.tsv:{lineno}: vertex {v} out of range for n={n}"
            )));
        }
        if labels[v] != usize::MAX {
            return Err(Error::validation(format!(
                "labels.tsv:{lineno}: duplicate label for vertex {v}"
            )));
        }
        labels[v] = label;
    }
    if let Some(v) = labels.iter().position(|&l| l == usize::MAX) {
        return Err(Error::validation(format!("vertex {v} has no label")));
    }
    Ok((graph, AttributeMatrix::complete(values), labels))
}

/// Writes the three dataset files in canonical order (sorted edges, sorted
/// nonzero attribute triplets, labels by vertex id). Requires a fully
/// observed attribute matrix; masks are persisted separately as mask.tsv.
pub fn save_dataset(dir: &Path, g: &Graph, x: &AttributeMatrix, y: &[usize]) -> Result<()> {
    if !x.is_fully_observed() {
        return Err(Error::validation(
            "save_dataset requires fully observed attributes; persist the mask via save_mask instead",
        ));
    }
    if g.n() != x.n() || g.n() != y.len() {
        return Err(Error::validation(format!(
            "inconsistent sizes: graph n={}, attrs n={}, labels n={}",
            g.n(),
            x.n(),
            y.len()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    save_edges(g, &dir.join("edges.tsv"))?;

    let attrs_path = dir.join("attrs.tsv");
    let mut w = BufWriter::new(fs::File::create(&attrs_path).map_err(|e| Error::io(&attrs_path, e))?);
    writeln!(w, "{}\t{}", x.n(), x.d()).map_err(|e| Error::io(&attrs_path, e))?;
    for v in 0..x.n() {
        for j in 0..x.d() {
            let value = x.values[[v, j]];
            if value != 0.0 {
                writeln!(w, "{v}\t{j}\t{value}").map_err(|e| Error::io(&attrs_path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(&attrs_path, e))?;

    let labels_path = dir.join("labels.tsv");
    let mut w = BufWriter::new(fs::File::create(&labels_path).map_err(|e| Error::io(&labels_path, e))?);
    for (v, &label) in y.iter().enumerate() {
        writeln!(w, "{v}\t{label}").map_err(|e| Error::io(&labels_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&labels_path, e))?;
    Ok(())
}
