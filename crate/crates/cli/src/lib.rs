//! Scenario runner: JSON configs in, energy logs, snapshots and analysis reports out.

pub mod compare;
pub mod config;
pub mod error;
pub mod scenario;

pub use compare::{compare_runs, Comparison, Tolerances};
pub use config::{load_config, parse_config, ScenarioConfig, SCHEMA_VERSION};
pub use error::CliError;
pub use scenario::{analyze_run_dir, run_kernel_validation, run_scenario, AnalysisReport, Outcome};
