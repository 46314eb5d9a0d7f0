use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("cannot condition on a zero-probability history: {0}")]
    Conditioning(String),

    #[error("distribution is not normalized (deviation {0:e})")]
    Normalization(f64),

    #[error("distribution is inconsistent: {0}")]
    Consistency(String),

    #[error("SDP solver failed: {message} (primal residual {primal_res:e}, dual residual {dual_res:e}, gap {gap:e})")]
    Solver {
        message: String,
        primal_res: f64,
        dual_res: f64,
        gap: f64,
    },

    #[error("no zero found: {0}")]
    NotFound(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
