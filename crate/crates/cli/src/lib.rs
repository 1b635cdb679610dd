//! Library side of the `hst` binary: run configuration, commands and exit codes.

pub mod commands;
pub mod config;
pub mod error;

pub use error::{CliError, CliResult, Failure};
