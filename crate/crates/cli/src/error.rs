use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config file or flag; `path` is the offending field.
    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("{file}:{line}: {msg}")]
    Input { file: PathBuf, line: usize, msg: String },

    #[error("rounds do not align: {0}")]
    Misaligned(String),

    #[error("attacks failed: {0}")]
    Attack(String),

    #[error(transparent)]
    Core(#[from] fedleak_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        CliError::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Core(fedleak_core::Error::Config(_)) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
