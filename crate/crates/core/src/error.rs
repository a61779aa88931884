use std::path::PathBuf;

/// Errors produced by the estimation, loss, evaluation and I/O routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate configuration (condition number {condition:.3e})")]
    Degenerate { condition: f64 },

    #[error("insufficient data: need {needed}, found {found}")]
    InsufficientData { needed: usize, found: usize },

    #[error("estimation failed: {0}")]
    EstimationFailed(String),

    #[error("degenerate scale: {0}")]
    DegenerateScale(String),

    #[error("format error in {path} at byte {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
