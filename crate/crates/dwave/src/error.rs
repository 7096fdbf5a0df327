use thiserror::Error;

/// Error type shared across the toolkit.
#[derive(Error, Debug)]
pub enum DwaveError {
    #[error("invalid noise schedule: {0}")]
    InvalidSchedule(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("bad file format ({path}): {reason}")]
    BadFormat { path: String, reason: String },

    #[error("checkpoint config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("audio error ({path}): {reason}")]
    Audio { path: String, reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DwaveError>;
