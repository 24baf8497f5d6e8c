use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("node id error: {0}")]
    NodeId(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("node {0} is not an indexed source")]
    NotIndexed(usize),
    #[error("graph has {n} nodes; automorphism search is capped at {cap} (use WL-only mode)")]
    TooLarge { n: usize, cap: usize },
    #[error("cannot sample {requested} non-edges: only {available} exist")]
    Saturated { requested: usize, available: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("training diverged: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
