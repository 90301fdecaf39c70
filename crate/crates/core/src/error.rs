use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(&'static str),

    #[error("measure truncation N = {n} does not exceed T = {t}")]
    TruncationTooShort { n: f64, t: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("inconsistent inverse data: {0}")]
    InconsistentData(String),

    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
}

pub type Result<T> = std::result::Result<T, Error>;
