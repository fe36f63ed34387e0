//! Command implementations behind the `sdfguide` binary.

pub mod commands;
pub mod error;
pub mod run_config;

pub use commands::*;
pub use error::CliError;
pub use run_config::RunConfig;
