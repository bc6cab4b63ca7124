use std::io;
use std::path::PathBuf;

/// Errors raised anywhere in the extraction pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A frame file could not be read.
    #[error("ingest error at frame {index} ({path}): {source}")]
    Ingest {
        index: usize,
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    /// A PPM byte stream is malformed.
    #[error("decode error at byte {offset}: {reason}")]
    Decode { offset: usize, reason: String },

    /// Input data is inconsistent (dimension mismatch, unparsable CSV, ...).
    #[error("data error: {0}")]
    Data(String),

    /// A precondition of an operation was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A computation produced non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Invalid configuration or parameters.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! contract {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::Contract(format!($($arg)+)));
        }
    };
}
pub(crate) use contract;
