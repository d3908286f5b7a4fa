//! File formats, JSON reports and the scenario runner behind the `qzk` binary.

pub mod error;
pub mod instance;
pub mod report;
pub mod scenarios;

pub use error::CliError;
pub use report::{Check, CheckKind, Report, SCHEMA};
pub use scenarios::{run_scenario, ConfigFile, Params, Scenario, ScenarioConfig};
