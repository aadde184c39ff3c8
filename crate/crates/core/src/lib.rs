//! Physical-layer substrate for a multi-task wireless foundation model.
//!
//! The crate covers everything that does not need a trainable network:
//!
//! * [`scene`]: randomized 10 m x 10 m x 3 m rooms and their top-down
//!   binary rasterization,
//! * [`propagation`]: line-of-sight and first-order image-source reflections,
//! * [`channel`]: UPA steering vectors and per-subcarrier multipath channels,
//! * [`phytasks`]: input/target synthesis for channel estimation, detection,
//!   precoding, polar decoding and localization, plus their metrics,
//! * [`baselines`]: LS, ZF/LMMSE, ZF precoding and WMMSE,
//! * [`datastore`]: the on-disk dataset container and scenario regeneration.
//!
//! Complex values are flattened to real features as interleaved
//! `(re, im)` pairs everywhere in this workspace.

pub mod baselines;
pub mod channel;
pub mod datastore;
pub mod error;
pub mod geom;
pub mod phytasks;
pub mod polar;
pub mod profile;
pub mod propagation;
pub mod scene;
pub mod seed;

pub use error::{Error, Result};

/// Complex sample type used throughout the crate.
pub type C64 = num_complex::Complex64;

/// Dense complex matrix (column-major, as stored by nalgebra).
pub type CMat = nalgebra::DMatrix<C64>;

/// Dense complex column vector.
pub type CVec = nalgebra::DVector<C64>;
