//! Adversarial forgetting for invariant representations: model, training,
//! evaluation, information-bound diagnostics and dataset pipelines.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod grid;
pub mod model;
pub mod nn;
pub mod projection;
pub mod trainer;

pub use error::{Error, Result};
