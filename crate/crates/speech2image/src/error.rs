//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an operation's input was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration value is out of range or inconsistent.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A numerical routine left its domain of validity (non-finite loss,
    /// eigenvalue residual above tolerance, diverging training).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A pipeline stage was invoked before its dependencies exist.
    #[error("missing dependency: {0}")]
    MissingDependency(String),

    /// Checkpoint or cache file does not match the expected format.
    #[error("bad file format: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Stable machine-readable kind tag, used by the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Numerical(_) => "numerical",
            Error::MissingDependency(_) => "missing_dependency",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}
