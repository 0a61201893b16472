use std::io;

use thiserror::Error;

/// Errors raised by the engine and its file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed record {index}: {reason}")]
    MalformedRecord { index: usize, reason: String },

    #[error("non-monotone timestamp at record {index}: {t} does not follow {prev}")]
    NonMonotoneTimestamp { index: usize, prev: f64, t: f64 },

    #[error("zero or non-finite embedding at record {index}")]
    ZeroEmbedding { index: usize },

    #[error("non-finite value {0}")]
    NonFiniteValue(f64),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("stream too short: need at least {needed} frames, got {actual}")]
    StreamTooShort { needed: usize, actual: usize },

    #[error("model is frozen")]
    AlreadyFrozen,

    #[error("empty segment")]
    EmptySegment,

    #[error("temporal sharpness must be positive, got {0}")]
    NonPositiveSharpness(f64),

    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("unreadable video: {0}")]
    UnreadableVideo(String),

    #[error("encoder failed to load: {0}")]
    EncoderLoadFailure(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code: 2 config, 3 input format, 4 dimension mismatch,
    /// 5 internal invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::InvalidSpec(_) | Error::NonPositiveSharpness(_) => 2,
            Error::DimensionMismatch { .. } => 4,
            Error::Invariant(_) | Error::AlreadyFrozen | Error::EmptySegment => 5,
            _ => 3,
        }
    }
}
