use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    /// A tree or plan that violates its structural invariants.
    #[error("invalid structure: {0}")]
    InvalidStructure(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two transmissions of one plan level touch the same node.
    #[error("schedule conflict at slot {slot}: node {node} used twice")]
    ScheduleConflict { slot: usize, node: usize },

    /// The latency budget cannot cover the forwarding stage.
    #[error("latency budget {given} is infeasible; at least {required} is needed")]
    InfeasibleBudget { required: f64, given: f64 },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
