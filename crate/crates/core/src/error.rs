use std::io;

use thiserror::Error;

use crate::config::ConfigError;
use crate::graph::GraphError;
use crate::topology::TopologyError;

/// A single rejected parameter value.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid `{key}`: {reason}")]
pub struct ParamError {
    pub key: &'static str,
    pub reason: String,
}

impl ParamError {
    pub fn new(key: &'static str, reason: impl Into<String>) -> Self {
        ParamError {
            key,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed csv {path}: {reason}")]
    Csv { path: String, reason: String },
}

impl Error {
    pub fn io(context: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code: 1 for configuration problems, 2 for IO.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Csv { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
