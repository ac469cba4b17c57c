use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("{path}: line {line}: {msg}")]
    Ingest {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("simulation not drained: {0}")]
    NotDrained(String),

    #[error("provisioning failed: {0}")]
    Provisioning(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("outside exact-solver envelope: {0}")]
    Envelope(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }
}
