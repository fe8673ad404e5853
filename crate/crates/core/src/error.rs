use thiserror::Error;

/// Errors raised by the algebraic and setup layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("matrix is singular to working precision (pivot {pivot})")]
    Singular { pivot: usize },

    #[error("eigensolver did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("partition does not cover nonzero A[{row}, {col}]")]
    UncoveredEntry { row: usize, col: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// a local or coarse factorization failed, usually because `A` is not spd
    #[error("setup failed: {0}")]
    Setup(String),

    #[error("coarse operator is not positive definite; tighten the dependence tolerance ({0})")]
    CoarseNotDefinite(String),

    #[error("Woodbury setup failed on column {column}: {reason}")]
    WoodburySetup { column: usize, reason: String },

    #[error("operator is not positive definite: <p, Ap> = {value:e} at iteration {iteration}")]
    IndefiniteOperator { iteration: usize, value: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
