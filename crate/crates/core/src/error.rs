//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("rank {requested} out of range for a {rows}x{cols} matrix")]
    RankOutOfRange {
        requested: usize,
        rows: usize,
        cols: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite entries in {0}")]
    NonFinite(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("instance too large: {0}")]
    InstanceTooLarge(String),

    #[error("cluster {missing} absent from labels (expected clusters 1..={k})")]
    MissingCluster { missing: usize, k: usize },

    #[error(
        "inconsistent rank selection: E={e}, E_m={e_m:?} imply K={k} and K_m={k_m:?}; \
         every cluster count must be at least 1"
    )]
    InconsistentSelection {
        e: usize,
        e_m: Vec<usize>,
        k: i64,
        k_m: Vec<i64>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
