use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the extraction engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing sidecar header {0}")]
    MissingHeader(PathBuf),

    #[error("malformed header {path}: {reason}")]
    BadHeader { path: PathBuf, reason: String },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("truncated frame in {path} at byte offset {offset} ({available} of {expected} bytes present)")]
    Truncated {
        path: PathBuf,
        offset: u64,
        available: usize,
        expected: usize,
    },

    #[error("frame {index} is {got_width}x{got_height}, expected {width}x{height}")]
    DimensionMismatch {
        index: u64,
        width: usize,
        height: usize,
        got_width: usize,
        got_height: usize,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(
        "value {value} at pixel ({x}, {y}) of frame {index} is outside the {bit_depth}-bit range"
    )]
    OutOfRange {
        index: u64,
        x: usize,
        y: usize,
        value: f64,
        bit_depth: u8,
    },

    #[error("non-finite value at pixel ({x}, {y}) of frame {index} in {stage}")]
    NonFinite {
        stage: &'static str,
        index: u64,
        x: usize,
        y: usize,
    },

    #[error("insufficient data: {0}")]
    Insufficient(String),
}

/// Coarse failure class, used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Input,
    Usage,
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } | Error::MissingHeader(_) => ErrorKind::Io,
            Error::BadHeader { .. }
            | Error::Format { .. }
            | Error::Truncated { .. }
            | Error::DimensionMismatch { .. } => ErrorKind::Input,
            Error::Parameter(_) | Error::Config(_) => ErrorKind::Usage,
            Error::OutOfRange { .. } | Error::NonFinite { .. } | Error::Insufficient(_) => {
                ErrorKind::Numeric
            }
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
