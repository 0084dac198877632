//! Crate-wide error type.
//!
//! Recoverable failures (bad input data, bad configuration, I/O) are reported
//! through [`Error`]. Contract violations — calling an operation with
//! arguments its documented preconditions forbid, such as `rng.int(0)` or an
//! out-of-range class target — panic instead.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point cloud must contain at least one point")]
    EmptyCloud,

    #[error("non-finite coordinate at point {index}")]
    NonFinitePoint { index: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("unknown split '{0}'")]
    UnknownSplit(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical error: {0}")]
    Numeric(String),

    #[error("checkpoint format version {found} not supported (this build reads version {supported})")]
    CheckpointVersion { found: u32, supported: u32 },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand for a parse error with position information.
    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
