//! Scenario configs and runs, the NLMS comparator and test-signal
//! generators.

pub mod baseline;
pub mod config;
pub mod generators;
pub mod run;
pub mod synthetic;

pub use baseline::baseline_fdaf;
pub use config::{Mode, RirConfig, ScenarioConfig};
pub use run::{build_scenario, run_scenario, RunReport, Scenario};
