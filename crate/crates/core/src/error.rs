//! Crate-wide error type.

use crate::report::SolveReport;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("duplicate index {index} in active set")]
    DuplicateIndex { index: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error in {path} at row {row}, column {col}: {message}")]
    Parse {
        path: String,
        row: usize,
        col: usize,
        message: String,
    },

    #[error("problem size {n} exceeds dense materialization cap {cap}")]
    SizeCapExceeded { n: usize, cap: usize },

    #[error("matrix factorization failed: block is not positive definite")]
    FactorizationFailed,

    #[error("numerical breakdown: Schur complement {schur:e} below threshold")]
    NumericalBreakdown {
        schur: f64,
        partial: Option<Box<SolveReport>>,
    },

    #[error("solver did not converge: gradient inf-norm {grad_inf_norm:e} after {iters} iterations")]
    NotConverged {
        grad_inf_norm: f64,
        iters: u64,
        report: Box<SolveReport>,
    },

    #[error("training target variance is zero")]
    ZeroVariance,

    #[error("requested {requested} rows but dataset has {available}")]
    NotEnoughRows { requested: usize, available: usize },

    #[error("io error for {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
