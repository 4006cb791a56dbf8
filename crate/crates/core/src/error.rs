use thiserror::Error;

/// Errors raised by the inference kernels and the simulation harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A documented precondition of an operation did not hold.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A matrix could not be factorized even after the maximum jitter.
    #[error("numerical failure: matrix not factorizable (condition estimate {condition:.3e})")]
    Numerical { condition: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
