//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value or unsupported option.
    #[error("configuration error: {0}")]
    Config(String),

    /// A symbol stream is too short to fill the requested sample length.
    #[error("insufficient symbols: need at least {needed} shaped samples, have {available}")]
    InsufficientSymbols { needed: usize, available: usize },

    /// A numeric operation left its valid domain (e.g. a vanishing
    /// amplifier-model denominator).
    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    /// SNR is undefined for a zero-power signal.
    #[error("SNR undefined: signal has zero power")]
    UndefinedSnr,

    /// Segment count incompatible with the signal length.
    #[error("invalid segmentation: k = {k} segments for signal of length {len}")]
    InvalidSegmentation { k: usize, len: usize },

    /// Non-finite values appeared in network activations.
    #[error("numeric failure in layer `{layer}`: non-finite activation")]
    NumericFailure { layer: String },

    /// A training trial diverged (non-finite loss).
    #[error("training failed at epoch {epoch}: non-finite loss")]
    TrainingFailed { epoch: usize },

    /// Malformed dataset or checkpoint file.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// Tensor or dataset shape inconsistency.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Evaluation requires a non-empty test set.
    #[error("empty test set")]
    EmptyTestSet,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }
}
