//! Experiment driver: JSON config in, CSV of outage estimates out.

pub mod config;
pub mod output;
pub mod run;

pub use config::{ConfigError, ExperimentConfig, StrategyConfig};
pub use output::{emit_csv, read_csv, ResultRow};
pub use run::{run_experiment, RunError, RunOptions};
