//! Command line front end for gaqueue: config files, the `broker`, `worker`,
//! `master`, `local` and `bench` subcommands, and CSV reporting.

pub mod cli;
pub mod config;
pub mod orchestrate;
pub mod report;

pub use config::{parse_config, parse_config_str, ConfigFileError, Mode, RunConfig};
pub use report::{BenchmarkReport, CsvReport, GenerationRow, GENERATION_HEADER};
