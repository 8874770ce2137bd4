use std::path::PathBuf;

use forgetnet_tensor::TensorError;
use thiserror::Error;

use crate::checkpoint::CheckpointError;
use crate::data::DataError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error(transparent)]
    Data(#[from] DataError),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error("config: {0}")]
    Config(String),

    #[error("{what}: width {got} does not match expected {expected}")]
    Width {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("task index {index} out of range for a model with {tasks} tasks")]
    TaskIndex { index: usize, tasks: usize },

    #[error("missing s labels for task {task}")]
    MissingLabels { task: usize },

    #[error("{0}: empty input")]
    Empty(&'static str),

    #[error("training diverged at cycle {cycle}: {reason}")]
    Diverged { cycle: u64, reason: String },

    #[error("probe training failed twice: {0}")]
    ProbeFailed(String),

    #[error("channels {first} and {second} are duplicates (correlation ≥ 1 − 1e-9)")]
    DuplicateChannels { first: usize, second: usize },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
