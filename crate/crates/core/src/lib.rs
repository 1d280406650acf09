//! Diffusion-based and classical recommenders with accuracy, consumer-fairness
//! and provider-fairness evaluation.

pub mod baselines;
pub mod dataset;
pub mod diffusion;
pub mod error;
pub mod harness;
pub mod ldiffrec;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod par;
pub mod rng;

pub use error::{Error, Result};
pub use model::{ModelKind, Recommender, TrainedModel};
