//! Error type shared by all toolkit modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// KL divergence is undefined: p places mass where q has none.
    #[error("support mismatch: {0}")]
    SupportMismatch(String),

    /// A configuration value is out of range or inconsistent.
    #[error("invalid config: {0}")]
    Config(String),

    /// A computation produced a non-finite value.
    #[error("numeric failure: {0}")]
    NumericFailure(String),

    /// A binary artifact failed structural validation.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    /// A line-delimited text artifact failed validation.
    #[error("format error at line {line}, field `{field}`: {msg}")]
    TextFormat {
        line: usize,
        field: String,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            msg: msg.into(),
        }
    }

    pub fn text_format(line: usize, field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::TextFormat {
            line,
            field: field.into(),
            msg: msg.into(),
        }
    }
}
