//! Command-line front end: configuration files, preset registry, report and
//! CSV emission.

// Negated comparisons also reject NaN, which is what the range checks want.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dump;
pub mod presets;
pub mod run;

pub use config::{parse_config, parse_str, Command, ConfigError, RunConfig};
pub use presets::Problem;
pub use run::{error_code, run, Cli, Status};
