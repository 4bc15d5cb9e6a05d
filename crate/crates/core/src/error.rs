use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("{0} has no {1}")]
    WrongSystem(&'static str, &'static str),

    /// A state component left the divergence bound or became non-finite.
    /// `time` is the model time (step index for maps) at which it happened.
    #[error("trajectory diverged at t = {time}")]
    Divergence { time: f64 },

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("boundary set is empty; dimension undefined")]
    EmptyBoundary,

    #[error("need at least 3 usable scales in the fit window, found {0}")]
    InsufficientScales(usize),

    #[error("sweep interrupted after {completed} of {total} rows; checkpoint kept")]
    Interrupted { completed: usize, total: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that mark an individual initial condition as unusable
    /// (the sweep records a sentinel row instead of aborting).
    pub fn is_numerical_outcome(&self) -> bool {
        matches!(self, Error::Divergence { .. } | Error::DegenerateSignal(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
