use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("dense oracle cap exceeded: dimension {dim} > cap {cap}")]
    OracleCapExceeded { dim: usize, cap: usize },

    #[error("eigensolver did not converge")]
    NoConvergence,

    #[error("rank-deficient input in {0}")]
    RankDeficient(&'static str),

    #[error("overlap matrix is near-singular (condition number {condition:.3e})")]
    NearSingularOverlap { condition: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid nesting configuration: {0}")]
    InvalidNesting(String),

    #[error("matrix is not positive semidefinite: smallest eigenvalue {0:.6e}")]
    NotPositiveSemidefinite(f64),

    #[error("invalid grid map: {0}")]
    InvalidMap(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("fit diverged at step {step}")]
    Diverged { step: usize },

    #[error("verification failed: {0}")]
    CheckFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn check_rows(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            context,
            expected: format!("{expected} rows"),
            found: format!("{found} rows"),
        });
    }
    Ok(())
}
