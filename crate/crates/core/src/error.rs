use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
///
/// The CLI maps [`Error::Io`] and [`Error::Wav`] to exit code 2 and every
/// other variant to exit code 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error(
        "cannot calibrate to {target_db:.3} dB: achievable interval is \
         ({min_db:.3} dB, {max_db:.3} dB)"
    )]
    Calibration {
        target_db: f64,
        min_db: f64,
        max_db: f64,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Wav { path: PathBuf, message: String },
}

impl Error {
    /// True for errors caused by the filesystem or by malformed audio files.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Wav { .. })
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
