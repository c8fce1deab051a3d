use thiserror::Error;

/// Errors produced by the estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HtfError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate support: lower and upper bounds coincide at {0}")]
    DegenerateSupport(f64),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("problem is unbounded: {0}")]
    Unbounded(String),

    #[error("every fit along the path failed to converge ({attempted} attempted)")]
    PathFailure { attempted: usize },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, HtfError>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(HtfError::LengthMismatch { expected, got });
    }
    Ok(())
}
