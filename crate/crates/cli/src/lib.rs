//! Configuration, orchestration and report output for the `coalition-attrib`
//! command-line tool.

pub mod config;
pub mod output;
pub mod run;

pub use config::{load_config, ConfigError, Format, RunConfig};
pub use run::{execute, prepare, Command, Outcome, Prepared, RunError};
