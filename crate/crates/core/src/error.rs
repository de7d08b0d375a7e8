use thiserror::Error;

/// Errors surfaced by the operator and solver layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("channel mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not orthogonal/tight within tolerance: defect {defect:.3e} > {tol:.3e}")]
    NotOrthogonal { defect: f64, tol: f64 },

    #[error("operator is not Parseval: {0}")]
    NotParseval(String),

    #[error("solver diverged: iterate norm {norm:.3e} exceeded {limit:.3e} at iteration {iteration}")]
    Divergence {
        norm: f64,
        limit: f64,
        iteration: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
