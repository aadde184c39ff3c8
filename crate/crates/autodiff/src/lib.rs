//! Reverse-mode automatic differentiation over dense, row-major `f64`
//! tensors, with the optimizer and checkpoint plumbing the model needs.
//!
//! Graphs are built eagerly: every op computes its value immediately and,
//! when any input requires a gradient, records a closure that maps the
//! output gradient to input gradients. [`Tensor::backward`] walks the graph
//! in reverse topological order and accumulates into leaf gradients.

mod error;
mod ops;
mod optim;
mod params;
mod tensor;

pub use error::{AdError, Result};
pub use optim::{clip_grad_norm, cosine_lr, grad_norm, Adam, AdamConfig};
pub use params::{load_checkpoint, save_checkpoint, Init, Param, ParamStore};
pub use tensor::Tensor;

/// Epsilon used by [`Tensor::layer_norm`] in the model.
pub const LAYER_NORM_EPS: f64 = 1e-5;
