//! Command-line front end: CSV ingestion, TOML configuration, the
//! subcommands and their metadata-stamped artifacts.

pub mod commands;
pub mod config;
pub mod ingest;
pub mod output;

pub use commands::run;
pub use config::{Command, Overrides, RunConfig};
