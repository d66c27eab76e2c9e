//! Command-line pipeline: configuration, CSV ingestion, stage orchestration
//! and run manifests.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod output;
pub mod stages;
pub mod synth;
pub mod validate;

pub use commands::{execute, Cli, Outcome};
pub use error::{CliError, CliResult};
