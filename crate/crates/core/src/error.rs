use thiserror::Error;

pub type Result<T> = std::result::Result<T, SwlpError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SwlpError {
    #[error("dimension mismatch in space {space}: expected {expected}, got {found}")]
    DimensionMismatch {
        space: String,
        expected: usize,
        found: usize,
    },

    #[error("gram form of space {space} is not symmetric positive definite")]
    NotPositiveDefinite { space: String },

    #[error("incompatible composition: {left} does not match {right}")]
    IncompatibleSpaces { left: String, right: String },

    #[error("negative time {0} for a semigroup (not a group)")]
    NegativeTime(f64),

    #[error("node {node} outside grid with {steps} steps")]
    NodeOutOfRange { node: usize, steps: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("solution diverged at node {node}")]
    Divergence { node: usize },

    #[error("picard iteration did not converge in {iterations} iterations (last contraction ratio {last_ratio:.3e})")]
    PicardNotConverged { iterations: usize, last_ratio: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported regime: {0}")]
    Unsupported(String),

    #[error("linear solve failed: {0}")]
    Singular(String),

    #[error("schema error: {0}")]
    Schema(String),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(SwlpError::InvalidArgument(msg.into()))
}
