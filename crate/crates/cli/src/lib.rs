//! Experiment runner for the geophase toolkit.
//!
//! Each command reads an [`config::ExperimentConfig`], produces a
//! [`report::Report`] of CSV tables plus a JSON metadata sidecar, and maps
//! its cross-check status onto the process exit code.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod validate;

pub use commands::{cmd_eigenstates, cmd_fig2, cmd_hannay, cmd_linear_check};
pub use config::{ExperimentConfig, Overrides};
pub use error::{CliError, CliResult};
pub use report::{Report, Status, Table};
pub use validate::{cmd_validate, ValidateOptions, ValidationReport};
