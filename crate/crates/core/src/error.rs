use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("non-finite value at grid index {index}")]
    Evaluation { index: usize },

    #[error("state diverged at step {step}")]
    Divergence { step: usize },

    #[error("{aborted} of {samples} samples diverged (limit {limit})")]
    DivergenceRate {
        aborted: usize,
        samples: usize,
        limit: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
