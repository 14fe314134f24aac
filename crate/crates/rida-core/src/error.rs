//! Error type shared across the pipeline.
//!
//! Variants are grouped by how the CLI maps them to exit codes: I/O
//! failures, input validation failures, and numerical divergence during
//! training.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Underlying filesystem failure while reading or writing an artifact.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A line in a TSV/CSV artifact could not be parsed.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// Structurally well-formed input that violates a documented contract
    /// (id out of range, duplicate edge, empty test set, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// A training loop produced a non-finite loss.
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
