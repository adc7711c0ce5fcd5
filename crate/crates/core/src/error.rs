use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("complexity guard: {0}")]
    Complexity(String),

    #[error("unknown test function `{name}`; available: {available}")]
    UnknownFunction { name: String, available: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid ensemble file: {0}")]
    Format(String),

    #[error("empty sample")]
    EmptySample,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
