use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("split too small: every part must keep at least one row per population ({0})")]
    SplitTooSmall(String),

    #[error("epsilon must lie strictly between 0 and 1, got {0}")]
    InvalidEpsilon(f64),

    #[error("point outside the configured support: {0}")]
    OutOfSupport(String),

    #[error("all subsampling weights are numerically zero")]
    DegenerateWeights,

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error(
        "optimizer diverged after {iterations} iterations (gradient sup-norm {grad_norm:.3e})"
    )]
    Diverged { iterations: usize, grad_norm: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("csv parse error at row {row}, column {column}: {message}")]
    ParseError {
        row: usize,
        column: String,
        message: String,
    },

    #[error("group column never takes value {0}")]
    GroupMissing(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
