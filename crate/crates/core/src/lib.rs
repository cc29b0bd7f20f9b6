//! Stochastic neural radiance fields with calibrated per-pixel uncertainty.

pub mod autodiff;
pub mod cli;
pub mod dist;
pub mod error;
pub mod eval;
pub mod field;
pub mod render;
pub mod rng;
pub mod scene;
pub mod train;

pub use error::{Error, Result};
