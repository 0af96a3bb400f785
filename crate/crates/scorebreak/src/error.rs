//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by schedule construction, oracles, attacks, training,
/// dataset IO and experiment orchestration.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("invalid noise schedule: {0}")]
    InvalidSchedule(String),

    #[error("timestep {t} outside schedule range [1, {max}]")]
    InvalidTimestep { t: usize, max: usize },

    #[error("invalid condition map: {0}")]
    InvalidCondition(String),

    #[error("unknown condition class {0}")]
    UnknownClass(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("victim failed the clean-accuracy gate: mIoU {miou:.4} < required {required:.4}")]
    GateFailed { miou: f64, required: f64 },

    #[error("victim query failed at attack step {step}: {message}")]
    QueryFailed { step: usize, message: String },

    #[error("dataset error for sample `{id}`: {message}")]
    Dataset { id: String, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("serialization error: {0}")]
    Serialize(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialize(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Serialize(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serialize(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
