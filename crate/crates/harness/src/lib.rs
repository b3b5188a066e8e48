//! Experiment plumbing for `dpkm`: planted data, point files, configured
//! runs with JSON-lines metrics and regression thresholds.

pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod points;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
