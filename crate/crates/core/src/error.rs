use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("epsilon {0} is below the supported floor {1}")]
    EpsilonTooSmall(f64, f64),
    #[error("delta must lie in [0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("probability must lie in [0, 1], got {0}")]
    InvalidProbability(f64),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("graph format error on line {line}: {reason}")]
    GraphFormat { line: usize, reason: String },
    #[error("vertex {vertex} out of range for a graph on {n} vertices")]
    VertexOutOfRange { vertex: usize, n: usize },
    #[error("instance too large for exhaustive enumeration: {reason}")]
    TooLarge { reason: String },
    #[error("randomizer `{id}` failed on vertex {vertex}: {reason}")]
    Randomizer {
        id: String,
        vertex: usize,
        reason: String,
    },
    #[error("postprocessor failed: {0}")]
    Postprocessor(String),
    #[error("oracle disagreement: {0}")]
    OracleMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
