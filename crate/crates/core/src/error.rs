//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an operation's arguments was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A bit stream could not be decoded back into a well-formed value.
    #[error("corrupt stream: {0}")]
    CorruptStream(String),

    /// Input that the operation cannot represent (e.g. quantizing all zeros).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Messages exchanged in a round violated the protocol's invariants.
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    /// A configuration field is missing, unknown, or malformed.
    #[error("config error in field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
