//! Configuration, orchestration and persistence for the `krsbm` binary.

pub mod commands;
pub mod config;
pub mod manifest;

pub use commands::{run, RunSummary};
pub use config::{Command, ConfigSource, RunConfig};
pub use manifest::RunManifest;
