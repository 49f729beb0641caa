//! Command-line front end and experiment harness for blocked diffusion-bridge sampling.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod output;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::CliError;
