//! Command-line laboratory for delayed non-local monostable fronts.

pub mod config;
pub mod lab;
pub mod output;

pub use config::{parse_config, parse_str, ConfigError, ExperimentConfig};
pub use lab::{CliError, Command, Lab};
