//! Gray-box structure poisoning for node classification on graphs with
//! incomplete vertex attributes.
//!
//! The library is organized along the pipeline stages:
//!
//! * [`graphio`] — dataset container types, TSV loading/saving, largest
//!   connected component extraction, symmetric adjacency normalization and
//!   the labeled train/test split.
//! * [`missingness`] — seeded masking of attribute entries and the mask
//!   file format.
//! * [`dpgnn`] — decayed-propagation feature completion with optional
//!   local/global cosine attention and boundary feature partitioning, plus
//!   the linear classification head used to produce pseudo-labels.
//! * [`haa`] — the heuristic adjacency-aware feature optimization, the
//!   two-layer linear surrogate, the analytic attack gradient through the
//!   self-loop normalization, and the greedy budgeted edge-flip loop.
//! * [`eval`] — the retrained GCN victim, the DICE baseline, mean
//!   imputation, and the end-to-end experiment runner with its JSON report.
//! * [`synth`] — seeded generation of citation-style benchmark analogs
//!   with pinned shape statistics, used where the original datasets cannot
//!   be redistributed.
//!
//! All randomness is funneled through explicit `u64` seeds and a
//! [ChaCha](rand_chacha::ChaCha8Rng) stream per concern (mask, split,
//! attack, target), so every pipeline output is bit-reproducible across
//! runs and platforms.

pub mod dpgnn;
pub mod error;
pub mod eval;
pub mod graphio;
pub mod haa;
pub mod missingness;
pub mod nn;
pub mod synth;

pub use error::{Error, Result};
