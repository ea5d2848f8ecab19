//! Reproducible experiment runner for `fbm-mdp-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod manifest;
pub mod registry;

pub use config::{validate_config, ExperimentConfig, Severity, Violation};
pub use error::{HarnessError, Result};
pub use manifest::{run_experiment, RunManifest};
pub use registry::list_experiments;
