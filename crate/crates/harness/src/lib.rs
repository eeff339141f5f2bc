//! Experiment harness: synthetic micro-scenes, PPM ingestion, the full
//! train/encode/classify pipeline and the diagnostic experiments.

pub mod config;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod pipeline;
pub mod ppm;
pub mod report;
pub mod stages;

pub use config::RunConfig;
pub use error::{HarnessError, Result};
