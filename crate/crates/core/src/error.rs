use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("truncated Pareto calibration failed: {0}")]
    Calibration(String),

    #[error("trace {path}: line {line}: {message}")]
    Trace {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("environment error: {0}")]
    Env(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("policy store: {0}")]
    Policy(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
