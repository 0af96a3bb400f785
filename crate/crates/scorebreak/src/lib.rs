//! Adversarial attacks for segmentation driven by the scores of a
//! conditional/unconditional generative diffusion model, plus the toy-scale
//! harness (synthetic data, victim segmenters, metrics, experiment runner)
//! used to evaluate them.

pub mod attack;
pub mod bench;
pub mod cfgscore;
pub mod container;
pub mod data;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod oracle;
pub mod plot;
pub mod schedule;
pub mod scorenet;
pub mod tensor;
pub mod victim;

pub use error::{Error, Result};
