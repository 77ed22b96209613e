use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("direction must lie in the open unit ball, got norm {0}")]
    InvalidDirection(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cholesky factorization failed after jitter escalation: {0}")]
    Factorization(String),

    #[error("numerical underflow: {0}")]
    Underflow(String),

    #[error("quadrature range too small: need r up to {needed:.3}, configured maximum is {rmax:.3}")]
    QuadratureRange { needed: f64, rmax: f64 },

    #[error("truncation window [{lo}, {hi}] carries negligible covariate mass ({mass:e})")]
    EmptyWindow { lo: f64, hi: f64, mass: f64 },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("malformed chain record: {0}")]
    Serialization(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
