use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {index} = {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("grid index {index} out of range 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("invalid pins: {0}")]
    InvalidPins(String),

    #[error("observation map `{0}` is not invertible")]
    NonInvertibleObsMap(String),

    #[error("time {time} is not on the grid (delta = {delta})")]
    OffGridTime { time: f64, delta: f64 },

    #[error("unsupported model for exact posterior: {0}")]
    UnsupportedModel(String),

    #[error("chain has no steps")]
    EmptyChain,

    #[error("invalid argument `{field}`: {reason}")]
    InvalidArgument { field: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
