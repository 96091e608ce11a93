use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the geometry kernels and the scan driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("subspace is not invariant under the operator (residual {residual:.3e})")]
    Invariance { residual: f64 },

    #[error("vector is not tangent at the base point (residual {residual:.3e})")]
    Tangency { residual: f64 },

    #[error("point outside the domain: {0}")]
    Domain(String),

    #[error("invalid metric: {0}")]
    Metric(String),

    #[error("degenerate T^(0,1) basis: rank {rank}, expected {expected}")]
    Degenerate { rank: usize, expected: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed report: {0}")]
    Report(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
