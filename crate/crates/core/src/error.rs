use thiserror::Error;

/// Errors raised by the estimation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("covariance is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("negative coordinate at point {point}, coordinate {coord}: {value}")]
    NegativeCoordinate { point: usize, coord: usize, value: f64 },

    #[error("classifier is degenerate: training labels contain a single class")]
    DegenerateLabels,

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("enumeration refused: {hidden} hidden neurons exceeds the limit of {limit}")]
    TooManyNeurons { hidden: usize, limit: usize },

    #[error("problem setup: {0}")]
    Problem(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        name,
        reason: reason.into(),
    }
}
