use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced anywhere in the toolkit.
///
/// Variants are split by whether the fault lies in the inputs (validation)
/// or in the environment (I/O), which the CLI maps onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("panel source `{source_id}`: {message}")]
    Panel { source_id: String, message: String },

    #[error("generation error: {0}")]
    Generation(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Embf {
        path: PathBuf,
        #[source]
        source: crate::io::EmbfError,
    },

    #[error("image error on {path}: {message}")]
    Image { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True when the error is caused by the environment rather than the inputs.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Image { .. })
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Invalid(_) => "invalid_input",
            Error::Parse { .. } => "parse",
            Error::Format { .. } => "format",
            Error::Panel { .. } => "panel",
            Error::Generation(_) => "generation",
            Error::Io { .. } => "io",
            Error::Image { .. } => "image",
            Error::Embf { .. } => "embf",
        }
    }
}
