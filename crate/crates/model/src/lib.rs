//! Multi-task wireless foundation model: network, data plumbing and training.

pub mod config;
pub mod data;
pub mod error;
mod layers;
pub mod net;
pub mod postprocess;
pub mod preprocess;
pub mod training;

pub use config::{ModelConfig, TaskId, TaskInstruction};
pub use data::TaskSamples;
pub use error::{ModelError, Result};
pub use net::{Forward, GeneratedParams, Model};
pub use preprocess::{Mode, RawBatch};
pub use training::{fit, load_model, save_model, TrainConfig};
