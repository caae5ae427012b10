//! A small transformer encoder with exact parameter and memory accounting,
//! structured and unstructured compression passes, and a forward-pass timing harness.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix
//! the `f64` instantiation that model files and the command line use.

pub mod cli;
pub mod compression;
pub mod error;
pub mod format;
pub mod model;
pub mod numerics;
pub mod profiler;
pub mod scalar;

pub use error::{Error, Result};
pub use model::ModelConfig;
pub use scalar::Scalar;

pub type Matrix = numerics::Matrix<f64>;
pub type Matrix32 = numerics::Matrix<f32>;
pub type ParamSet = model::ParamSet<f64>;
pub type ParamSet32 = model::ParamSet<f32>;
pub type ForwardTrace = model::ForwardTrace<f64>;
