use thiserror::Error;

use crate::linalg::DenseMatrix;

pub type Result<T> = std::result::Result<T, SpocError>;

#[derive(Debug, Clone, Error)]
pub enum SpocError {
    #[error("dimension mismatch in {op}: expected {expected}, found {found}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("rank {k} out of range [1, {max}]")]
    RankOutOfRange { k: usize, max: usize },

    #[error("matrix is singular at rank {k}: lambda_k / lambda_1 = {ratio:e}")]
    Singular { k: usize, ratio: f64 },

    #[error("rank deficient: only {found} of {requested} nonzero directions available")]
    RankDeficient { requested: usize, found: usize },

    #[error("iteration limit {iterations} reached (constraint violation {violation:e})")]
    IterationLimit {
        iterations: usize,
        violation: f64,
        last: Box<DenseMatrix>,
    },

    #[error("selected anchor matrix is degenerate: lambda_min / lambda_max = {ratio:e}")]
    DegenerateAnchors { ratio: f64 },

    #[error("estimated number of topics {k_hat} is below 2")]
    UnderdeterminedRank { k_hat: usize },

    #[error("estimated number of topics {k_hat} exceeds the cap {cap}")]
    RankCapExceeded { k_hat: usize, cap: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl SpocError {
    pub(crate) fn dims(op: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        SpocError::DimensionMismatch {
            op,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
