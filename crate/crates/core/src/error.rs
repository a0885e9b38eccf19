use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("duplicate sample for trajectory {id} at time index {time_index}")]
    Duplicate { id: u64, time_index: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("trajectory {label} is not present at slice {slice}")]
    Absent { label: usize, slice: usize },

    #[error("unsupported operation for flow variant {0}")]
    UnsupportedVariant(&'static str),

    #[error("integration error: {0}")]
    Integration(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("instance too large for exhaustive enumeration: {0}")]
    TooLarge(String),

    #[error("checksum mismatch in {0}")]
    Checksum(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input or parameters rather than by a
    /// failed computation.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Integration(_) | Error::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
