use std::path::PathBuf;

use quadenhance_core::Error as CoreError;
use thiserror::Error;

use crate::checkpoint::CheckpointError;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint {path}: {source}")]
    Checkpoint {
        path: PathBuf,
        #[source]
        source: CheckpointError,
    },

    #[error("training diverged at epoch {epoch}, batch {batch}: {source}")]
    Diverged {
        epoch: usize,
        batch: usize,
        #[source]
        source: CoreError,
    },

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl HarnessError {
    pub fn config(msg: impl Into<String>) -> Self {
        HarnessError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 for a failed run, 2 for bad configuration, 3 for I/O or data.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Io { .. } | HarnessError::Checkpoint { .. } => 3,
            HarnessError::Diverged { .. } => 1,
            HarnessError::Core(e) => match e {
                CoreError::Config(_) | CoreError::Usage(_) | CoreError::Dimension(_) => 2,
                CoreError::Data(_) | CoreError::Io(_) => 3,
                CoreError::NonFinite { .. } => 1,
            },
        }
    }
}
