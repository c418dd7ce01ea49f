use thiserror::Error;

/// Errors produced across the tracking, learning and detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A factorization failed; `ping` is the 1-based ping index being processed.
    #[error("numerical failure at ping {ping}: {reason}")]
    Numerical { ping: usize, reason: String },

    #[error("fit failed for model {model}: {reason}")]
    Fit { model: String, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn numerical(ping: usize, reason: impl Into<String>) -> Self {
        Error::Numerical {
            ping,
            reason: reason.into(),
        }
    }

    /// True for failures caused by the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical { .. } | Error::Fit { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
