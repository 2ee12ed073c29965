use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on the input was violated.
    #[error("domain error: {0}")]
    Domain(String),

    /// A row that must be normalizable has (near) zero norm.
    #[error("row {row} has near-zero norm ({norm:e})")]
    ZeroRow { row: usize, norm: f64 },

    #[error("training failed at step {step}: {reason}")]
    Training { step: usize, reason: String },

    /// The min-norm-point iteration could not certify either verdict.
    #[error("hull verdict indeterminate after {iterations} iterations (attained norm {norm:e})")]
    Indeterminate {
        iterations: usize,
        norm: f64,
        trace: Vec<f64>,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
