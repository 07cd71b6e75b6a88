use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("argument {value} outside the domain of {what}")]
    Domain { what: &'static str, value: f64 },

    #[error("index {index} outside the range of {what}")]
    Index { what: &'static str, index: usize },

    #[error("{what} did not converge after {iterations} iterations")]
    Convergence { what: &'static str, iterations: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric positive definite")]
    NotSpd,

    #[error("matrix is singular to working precision (estimated condition number {condition:e})")]
    Singular { condition: f64 },

    #[error("matrix exponential overflow: ||A t||_1 = {norm:e}")]
    ExpmOverflow { norm: f64 },

    #[error("operation not supported for the {0} formulation")]
    Unsupported(String),

    #[error("observability lost: smallest Gramian eigenvalue {smallest:e}")]
    LossOfObservability { smallest: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
