use thiserror::Error;

#[derive(Debug, Error)]
pub enum WflowError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("unsupported derivative: {0}")]
    UnsupportedDerivative(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("state not normalized: integral {integral} (tolerance {tolerance})")]
    NotNormalized { integral: f64, tolerance: f64 },
    #[error("non-finite value encountered at step {step}")]
    NonFinite { step: usize },
    #[error("potential not supported here: {0}")]
    UnsupportedPotential(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, WflowError>;
