//! Library side of the `pdmp-exit` command: configuration, model selection and
//! the subcommands, kept out of `main` so tests can drive them directly.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod csv;
pub mod error;
pub mod models;

pub use config::{FileConfig, Overrides, RunConfig};
pub use error::{CliError, Result};
