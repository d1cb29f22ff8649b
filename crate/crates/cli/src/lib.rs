//! Experiment runner behind the `tmcqc` binary: TOML configs in, CSV and
//! JSON reports out.

pub mod config;
pub mod error;
pub mod experiment;
pub mod report;
pub mod validate;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{CliError, CliResult};
pub use experiment::run_experiment;
pub use report::ExperimentReport;
pub use validate::{validate, Validation};
