use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {actual}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        actual: String,
    },

    /// A restricted column block (or the Gram matrix `ΦΦᵀ`) is numerically rank deficient.
    /// `support` is the column set that was being solved on, `dependent` the columns
    /// whose pivots fell below tolerance.
    #[error("rank-deficient column block on {} columns (dependent: {dependent:?})", support.len())]
    RankDeficient {
        support: Vec<usize>,
        dependent: Vec<usize>,
    },

    #[error("degenerate input to {0}: matrix is zero")]
    Degenerate(&'static str),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("{subsets} subsets requested, enumeration limit is {limit}")]
    SubsetLimit { subsets: u128, limit: u128 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("two evaluations of {what} disagree: {a} vs {b}")]
    Inconsistent { what: &'static str, a: f64, b: f64 },
}

impl Error {
    pub(crate) fn dims(
        op: &'static str,
        expected: impl std::fmt::Display,
        actual: impl std::fmt::Display,
    ) -> Self {
        Error::DimensionMismatch {
            op,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
