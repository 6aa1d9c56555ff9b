//! Configuration, orchestration and report files for the `bubbletower`
//! command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod report;
pub mod run;

pub use cli::main_with_args;
pub use config::{parse_text, Command, EpsSpec, RunConfig};
pub use error::CliError;
pub use run::{dispatch, execute};
