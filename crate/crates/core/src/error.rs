use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, NnctError>;

#[derive(Debug, Error)]
pub enum NnctError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("invalid point set: {0}")]
    Validation(String),

    #[error("need at least {required} points, got {got}")]
    InsufficientPoints { required: usize, got: usize },

    #[error("inconsistent inputs: {0}")]
    Consistency(String),

    #[error("degenerate moment context: {0}")]
    DegenerateContext(String),

    #[error("degenerate variance in cell ({row}, {col}): {variance:e}")]
    DegenerateVariance { row: usize, col: usize, variance: f64 },

    #[error("degenerate class {class}: {reason}")]
    DegenerateClass { class: usize, reason: String },

    #[error("covariance matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e}, max {max_eigenvalue:e})")]
    NotPsd {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("invalid argument: {0}")]
    Argument(String),
}

impl NnctError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NnctError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that come from degenerate class sizes or variances,
    /// which Monte Carlo loops tolerate on individual replicates.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            NnctError::DegenerateVariance { .. }
                | NnctError::DegenerateClass { .. }
                | NnctError::DegenerateContext(_)
                | NnctError::NotPsd { .. }
        )
    }
}
