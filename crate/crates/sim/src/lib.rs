//! Experiment harness around `iadmm-core`: config files, data and graph
//! generation, CSV formats, sweeps and the invariant suite.

pub mod checks;
pub mod cli;
pub mod config;
pub mod experiment;
pub mod formats;
pub mod sweep;
pub mod verify;

pub use config::{ConfigError, ExperimentConfig};
pub use experiment::HarnessError;
