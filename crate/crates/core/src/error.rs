use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot:e})")]
    NotPositiveDefinite { pivot: f64 },

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("mixture component {component} has no mass")]
    DegenerateComponent { component: usize },

    #[error("trace too short: need at least {needed} samples, found {found}")]
    InsufficientLength { needed: usize, found: usize },

    #[error("at least {needed} replicates required, got {found}")]
    TooFewReplicates { needed: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
