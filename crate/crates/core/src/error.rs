use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the reconstruction library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("corrupt header in {path}: {reason}")]
    CorruptHeader { path: PathBuf, reason: String },

    #[error("truncated payload in {path}: expected {expected} bytes, found {found}")]
    TruncatedPayload {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("unsupported MPIC version {version} in {path}")]
    UnsupportedVersion { path: PathBuf, version: u8 },

    #[error("requested rank {requested} exceeds numerical rank {numerical_rank}")]
    RankDeficient {
        requested: usize,
        numerical_rank: usize,
    },

    #[error("frequency selection mismatch: {0}")]
    FrequencyMismatch(String),

    #[error("series has a single frame; interpolation needs at least two")]
    DegenerateSeries,

    #[error("non-finite value at row {row} during sweep {sweep}")]
    NonFinite { row: usize, sweep: usize },

    #[error("no half-maximum crossing on the {side} side of the peak")]
    NoCrossing { side: &'static str },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end:
    /// 2 config error, 3 I/O error, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) | Error::FrequencyMismatch(_) => 2,
            Error::Io { .. }
            | Error::Json { .. }
            | Error::CorruptHeader { .. }
            | Error::TruncatedPayload { .. }
            | Error::UnsupportedVersion { .. } => 3,
            Error::IndexOutOfRange(_) | Error::DimensionMismatch(_) | Error::DegenerateSeries => 2,
            Error::RankDeficient { .. } | Error::NonFinite { .. } | Error::NoCrossing { .. } => 4,
        }
    }
}
