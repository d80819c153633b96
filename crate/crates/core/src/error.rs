use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// The operator has a zero (or negative) bottom eigenvalue, so negative
    /// powers of it do not exist.
    #[error("singular operator: {0}")]
    SingularOperator(String),

    #[error("eigensolver failed for a {dim}x{dim} matrix (diagonal range {diag_min:.3e}..{diag_max:.3e}, off-diagonal scale {offdiag:.3e})")]
    Eigen {
        dim: usize,
        diag_min: f64,
        diag_max: f64,
        offdiag: f64,
    },

    #[error("refinement needed: {0}")]
    RefinementNeeded(String),

    #[error("invalid cube family: {0}")]
    FamilyInvalid(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("range error: {message}")]
    Range {
        message: String,
        suggestion: Option<f64>,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
