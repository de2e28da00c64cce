//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter failed validation. `name` is the user-facing key.
    #[error("invalid `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("non-finite values in {context}")]
    NonFinite { context: &'static str },

    #[error("time step {t} out of range for a {t0}-step schedule")]
    StepOutOfRange { t: usize, t0: usize },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("malformed tensor file: {0}")]
    MalformedTensorFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
