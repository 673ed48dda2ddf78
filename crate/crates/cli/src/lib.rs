//! Command-line layer for the `rpol` simulator: configuration files, trace
//! and summary formats, and the run/sweep/oracle/verify/repro commands.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use config::{resolve, ExperimentConfig, RawConfig};
pub use error::{CliError, CliResult};
