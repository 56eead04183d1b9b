//! Experiment driver for the `inf-mmala` samplers: configuration parsing,
//! built-in presets for the benchmark scenario, and CSV output.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod presets;

pub use config::{parse_config, ExperimentConfig};
pub use error::{CliError, Result};
