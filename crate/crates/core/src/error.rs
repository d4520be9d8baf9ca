use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// The operation is not defined for the given grid (binary terms in 3D).
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A file could not be decoded.
    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },

    /// A file decoded but its content is not what the reader expects.
    #[error("format error: {0}")]
    Format(String),

    #[error("score provider failed in round {round}: {source}")]
    Provider {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
