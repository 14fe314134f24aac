//! Seeded generation of attribute-incompleteness masks and the mask.tsv
//! format.
//!
//! A mask request is (α, β, seed): ⌊β·n⌋ vertices are drawn uniformly
//! without replacement, then each affected vertex (visited in ascending id
//! order) gets ⌊α·d⌋ missing attribute positions drawn uniformly without
//! replacement from the same seeded stream. Missing entries are stored as 0
//! and marked unobserved.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graphio::AttributeMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissingnessSpec {
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
}

impl MissingnessSpec {
    pub fn new(alpha: f64, beta: f64, seed: u64) -> Result<MissingnessSpec> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::validation(format!(
                "alpha must lie in [0,1], got {alpha}"
            )));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::validation(format!(
                "beta must lie in [0,1], got {beta}"
            )));
        }
        Ok(MissingnessSpec { alpha, beta, seed })
    }
}

/// Applies a missingness spec to a fully observed matrix. Exactly
/// ⌊β·n⌋·⌊α·d⌋ entries end up missing; the result is a pure function of
/// (x, spec).
pub fn apply_missingness(x: &AttributeMatrix, spec: &MissingnessSpec) -> Result<AttributeMatrix> {
    if !x.is_fully_observed() {
        return Err(Error::validation(
            "apply_missingness requires a fully observed input matrix",
        ));
    }
    let n = x.n();
    let d = x.d();
    let affected = (spec.beta * n as f64).floor() as usize;
    let per_vertex = (spec.alpha * d as f64).floor() as usize;
    let mut out = x.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut vertices = rand::seq::index::sample(&mut rng, n, affected).into_vec();
    vertices.sort_unstable();
    for v in vertices {
        let cols = rand::seq::index::sample(&mut rng, d, per_vertex);
        for j in cols {
            out.values[[v, j]] = 0.0;
            out.mask[[v, j]] = false;
        }
    }
    Ok(out)
}

/// Writes mask.tsv: one `v<TAB>j` line per missing entry, row-major order.
/// An all-observed mask is only written when `allow_empty` is set, to guard
/// against persisting a mask that was never applied.
pub fn save_mask(x: &AttributeMatrix, path: &Path, allow_empty: bool) -> Result<()> {
    if x.is_fully_observed() && !allow_empty {
        return Err(Error::validation(
            "refusing to save an empty mask without the explicit empty-mask flag",
        ));
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for v in 0..x.n() {
        for j in 0..x.d() {
            if !x.mask[[v, j]] {
                writeln!(w, "{v}\t{j}").map_err(|e| Error::io(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads mask.tsv and applies it to a complete matrix: listed entries are
/// zeroed and marked missing. Duplicate or out-of-range lines are rejected.
pub fn load_mask(x_complete: &AttributeMatrix, path: &Path) -> Result<AttributeMatrix> {
    if !x_complete.is_fully_observed() {
        return Err(Error::validation(
            "load_mask expects the complete attribute matrix as its base",
        ));
    }
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = x_complete.clone();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::parse(path, lineno, "expected v<TAB>j"));
        }
        let v: usize = fields[0]
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("invalid vertex id '{}'", fields[0])))?;
        let j: usize = fields[1]
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("invalid attribute index '{}'", fields[1])))?;
        if v >= out.n() || j >= out.d() {
            return Err(Error::validation(format!(
                "mask entry ({v},{j}) out of range for {}x{}",
                out.n(),
                out.d()
            )));
        }
        if !out.mask[[v, j]] {
            return Err(Error::validation(format!(
                "duplicate mask entry ({v},{j})"
            )));
        }
        out.values[[v, j]] = 0.0;
        out.mask[[v, j]] = false;
    }
    Ok(out)
}
