use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("token id {id} out of range for vocabulary of size {size}")]
    TokenOutOfRange { id: usize, size: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged (non-finite loss) at round {round}, client {client}")]
    Divergence { round: usize, client: usize },

    #[error("non-finite loss")]
    NonFiniteLoss,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("attack error: {0}")]
    Attack(String),

    #[error("statistics error: {0}")]
    Stats(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
