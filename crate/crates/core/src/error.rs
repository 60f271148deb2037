use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the flowgate library.
#[derive(Debug, Error)]
pub enum Error {
    /// A shape or size was zero or did not match what the operation needs.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A value was out of range or non-finite.
    #[error("validation error: {0}")]
    Validation(String),

    /// A file could not be read or written.
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file was readable but its contents were malformed.
    #[error("format error in {}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    /// The run configuration was rejected.
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
