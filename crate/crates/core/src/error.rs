use std::path::PathBuf;

/// Errors raised anywhere in the simulator.
///
/// The CLI maps everything that stems from bad input (configuration,
/// arguments, parse and validation failures) to exit code 2 and the rest
/// to exit code 1, see [`Error::is_validation`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate geometry: {0}")]
    Geometry(String),

    #[error("no signal in received frame")]
    NoSignal,

    #[error("inconsistent echo: {0}")]
    EchoInconsistent(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the caller's input rather than by a
    /// failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Argument(_)
                | Error::Domain(_)
                | Error::Parse { .. }
                | Error::Validation { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
