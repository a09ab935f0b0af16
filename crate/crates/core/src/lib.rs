//! StressNet: a surrogate that forecasts the maximum internal stress of a
//! fracturing brittle plate from its recent stress history and binary damage
//! frames.
//!
//! The crate contains everything needed end to end: a dense tensor type,
//! hand-differentiated layers, the two-branch model, a synthetic fracture
//! generator, preprocessing, an Adam training loop, baselines, and recursive
//! rollout evaluation.

pub mod baselines;
pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod gradcheck;
pub mod layers;
pub mod losses;
pub mod model;
pub mod params;
pub mod pipeline;
pub mod plot;
pub mod rng;
pub mod sim;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
