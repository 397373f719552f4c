use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SdeError>;

#[derive(Debug, Error)]
pub enum SdeError {
    /// An argument violated the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration or model description is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// The integrator produced a non-finite state.
    #[error("simulation fault at step {step}: {reason}")]
    SimulationFault { step: usize, reason: String },

    /// Excitation collection aborted after some rows were already gathered.
    #[error("excitation collection aborted after {rows} rows: {reason}")]
    PartialData { rows: usize, reason: String },

    /// A persisted artifact could not be parsed.
    #[error("parse error in {path}: line {line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    /// An operation is not defined for the requested training mode.
    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl SdeError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        SdeError::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        SdeError::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SdeError::Io {
            path: path.into(),
            source,
        }
    }
}
