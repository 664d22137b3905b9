use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Load {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("budget {k} exceeds node count {n}")]
    Budget { k: usize, n: usize },

    #[error("graph too large for exact enumeration: {0}")]
    Size(String),

    #[error("parameter shape mismatch: {0}")]
    Shape(String),

    #[error("stale forward cache: {0}")]
    StaleCache(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
