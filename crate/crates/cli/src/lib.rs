//! Experiment harness for `swlp-core`: JSON configs, preset systems, verification
//! suites and versioned run reports.

pub mod config;
pub mod error;
pub mod presets;
pub mod report;
pub mod run;

pub use config::{ExperimentConfig, Instance, CONFIG_SCHEMA};
pub use error::HarnessError;
pub use report::{Record, RunReport, Tolerance, REPORT_SCHEMA};
pub use run::{run, Command};
