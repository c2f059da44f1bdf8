use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("capacity exceeded: {what} = {value} (maximum {max})")]
    Capacity {
        what: &'static str,
        value: usize,
        max: usize,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("eigensolver did not converge after {iterations} iterations (best residual {best_residual:.3e})")]
    Convergence {
        iterations: usize,
        best_residual: f64,
    },

    #[error("measurement source exhausted for configuration {config}: requested {requested}, {available} left")]
    SourceExhausted {
        config: String,
        requested: usize,
        available: usize,
    },

    #[error("empty snapshot pool")]
    EmptyPool,

    #[error("budget parity violated: {0}")]
    BudgetParity(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
