//! Config-driven experiment runner: parse a TOML config, run one pipeline, write CSV and
//! SVG reports with a run record.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{ConfigError, ExperimentConfig, ExperimentKind};
pub use report::{emit_report, Report};
pub use runner::{build_report, run_experiment, RunError, RunRecord};
