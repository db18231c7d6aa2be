use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate channel: column {column} of the estimated channel is zero")]
    DegenerateChannel { column: usize },

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("episode finished; call reset before stepping again")]
    EpisodeFinished,

    #[error("usage error: {0}")]
    Usage(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
