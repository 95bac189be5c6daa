//! CLI error handling: user errors exit with code 2, unexpected ones with 1.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Bad input: unreadable/malformed files, invalid configuration, data
    /// that fails validation. Exit code 2.
    User(String),
    /// Unexpected internal failure. Exit code 1.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::User(_) => 2,
            CliError::Internal(_) => 1,
        }
    }

    pub fn user(msg: impl Into<String>) -> Self {
        CliError::User(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::User(msg) | CliError::Internal(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<hdglht::Error> for CliError {
    fn from(e: hdglht::Error) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::User(format!("invalid JSON: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
