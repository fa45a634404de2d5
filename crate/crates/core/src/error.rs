use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is missing, malformed, or out of range. `path`
    /// names the offending field, e.g. `cost.c_min`.
    #[error("{path}: {message}")]
    Config { path: String, message: String },

    #[error("failed to parse config: {0}")]
    Parse(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the user's configuration rather than the
    /// environment.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Parse(_))
    }
}
