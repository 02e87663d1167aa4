//! Experiment runner for nudged state-space filters.
//!
//! Each subcommand of `expcli` maps to one function in [`experiments`]. The
//! Lorenz experiments compare plain and nudged particle filters. The sweep
//! uses exact Kalman evidences, and `verify` drives the finite-model oracle.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod report;

pub use config::{Experiment, ExperimentConfig, Scenario};
pub use error::{CliError, CliResult};
