use thiserror::Error;

/// Errors raised by the estimation, derivative and experiment routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed or out-of-domain input (dimension mismatch, bad parameter, wrong measure kind).
    #[error("input error: {0}")]
    Input(String),
    /// A computation produced a non-finite value or failed to converge.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// An internal self-check failed.
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
