//! Library half of the `qsopt` command: JSON configs, vector files, report
//! rendering and the subcommands themselves.

pub mod commands;
pub mod config;
mod error;
pub mod output;
pub mod vecio;

pub use error::{exit, CliError};
