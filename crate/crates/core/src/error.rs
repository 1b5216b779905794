use thiserror::Error;

/// Errors raised by model construction, inference routines and input validation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter `{name}` = {value} is outside the domain of its {transform} transform")]
    Domain {
        name: String,
        value: f64,
        transform: &'static str,
    },

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("coincident coordinates for units {0} and {1}")]
    CoincidentUnits(usize, usize),

    #[error("filter failure at observation index {time} (block {block}): every particle weight underflowed")]
    FilterFailure { time: usize, block: usize },

    #[error("profile maximum lies on the grid boundary at {0}; widen the grid or use the boundary likelihood ratio interval")]
    BoundaryMaximum(f64),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
