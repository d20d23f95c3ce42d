//! Monte Carlo engine, estimators, scenario configs and reports.

pub mod config;
pub mod engine;
pub mod estimators;
pub mod report;
pub mod reset;
pub mod scenarios;

pub use config::{Scenario, ScenarioConfig};
pub use report::{Check, RunReport};
pub use scenarios::run_scenario;
