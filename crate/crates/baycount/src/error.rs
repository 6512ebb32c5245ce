use thiserror::Error;

/// Errors produced by model construction, samplers, and chain runners.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument was outside the domain of the operation.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Two inputs had incompatible shapes.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A chain failed while running; carries the K it was fitting.
    #[error("chain failed at K={k}: {source}")]
    ChainFailed {
        k: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
