use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    /// The pivot candidate for `column` (zero-based) was exactly zero.
    #[error("zero pivot in column {}", .column + 1)]
    ZeroPivot { column: usize },

    /// A non-finite value appeared while processing `column` (zero-based).
    #[error("non-finite value produced at column {}", .column + 1)]
    NonFinite { column: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("io error on {}: {message}", path.display())]
    Io { path: PathBuf, message: String },

    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
}
