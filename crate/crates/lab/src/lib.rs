//! Experiment harness for the `pbeegees-core` simulator: configuration files,
//! repeated seeded runs, metrics, CSV and trace output, and the scripted
//! adversarial scenarios.

pub mod config;
pub mod experiment;
pub mod metrics;
pub mod output;
pub mod scenarios;

pub use config::{ConfigError, ExperimentConfig, Overrides};
pub use experiment::{run_experiment, ExperimentError, ExperimentResult, RunResult};
pub use metrics::MetricsSummary;
pub use scenarios::{run_scenario, Scenario, ScenarioParams, ScenarioReport, UnknownScenario};
