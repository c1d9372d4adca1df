use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid sequence spec: {0}")]
    InvalidSpec(String),

    #[error("direction is undefined: every directional response is zero")]
    UndefinedDirection,

    #[error("config error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    /// A frame file that could not be decoded or does not fit the stream.
    #[error("frame {}: {message}", path.display())]
    Frame { path: PathBuf, message: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) | Error::InvalidSpec(_) => 1,
            Error::Io { .. } | Error::Frame { .. } | Error::Csv(_) => 2,
            Error::InvalidState(_) | Error::UndefinedDirection => 3,
        }
    }
}
