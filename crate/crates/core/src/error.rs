use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
///
/// The variants are grouped so that a front end can map them onto coarse
/// exit statuses: malformed or inconsistent input, invalid configuration,
/// and refusal to exceed a resource cap.
#[derive(Debug, Error)]
pub enum CropError {
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid weight: {0}")]
    Weight(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("resource cap exceeded: {0}")]
    Resource(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CropError {
    pub fn parse(source_name: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        CropError::Parse {
            source_name: source_name.into(),
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CropError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the input data rather than the caller's settings.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            CropError::Parse { .. }
                | CropError::Dimension(_)
                | CropError::Weight(_)
                | CropError::Io { .. }
        )
    }
}

pub type Result<T, E = CropError> = std::result::Result<T, E>;
