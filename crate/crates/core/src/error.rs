use std::path::PathBuf;

/// Errors raised anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("every entry is masked")]
    AllMasked,

    #[error("cannot draw {m} distinct indices out of {n}")]
    TooManyDraws { m: usize, n: usize },

    #[error("index {index} out of range for length {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("duplicate index {0} in sampling pattern")]
    DuplicateIndex(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operation requires {expected} sampler mode")]
    WrongMode { expected: &'static str },

    #[error("non-finite loss at epoch {epoch}, batch {batch}; parameter norms: {report}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        report: String,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
