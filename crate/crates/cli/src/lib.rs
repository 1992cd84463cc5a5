//! Runs the diffsim experiments from TOML configs and writes CSV/JSON
//! artifacts plus a run manifest.

pub mod commands;
pub mod config;
pub mod error;
pub mod grid;
pub mod output;

pub use commands::run;
pub use config::{Command, Overrides, RunConfig};
pub use error::CliError;
pub use output::RunManifest;
