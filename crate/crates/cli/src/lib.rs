//! Config-driven experiment harness: scene synthesis, solver runs, success
//! rates, frequency RMSE, dual surfaces and timing tables.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod output;
pub mod scene;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
