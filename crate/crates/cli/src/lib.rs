//! Experiment runner around the `lungsound` pipeline: configuration files,
//! single runs with on-disk artifacts, sweeps and offline scoring.

pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod score;
pub mod sweep;

pub use config::ExperimentConfig;
pub use error::CliError;
