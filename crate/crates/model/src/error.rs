use musefm_autodiff::AdError;
use thiserror::Error;

use crate::config::TaskId;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AdError),
    #[error(transparent)]
    Core(#[from] musefm_core::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("input shape: {0}")]
    Shape(String),
    #[error("sequence of {len} tokens exceeds the capacity of {cap}")]
    SequenceOverflow { len: usize, cap: usize },
    #[error("non-finite loss in task {task}: {detail}")]
    NonFiniteLoss { task: TaskId, detail: String },
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;
