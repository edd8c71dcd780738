//! Experiment runner for the `crwn` library: configuration, run
//! directories and artifact emission.

pub mod commands;
pub mod config;
pub mod error;
pub mod fetch;
pub mod lock;

pub use commands::{cmd_analyze, cmd_reconstruct, cmd_report, cmd_train, Analysis};
pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
