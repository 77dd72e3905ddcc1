//! Experiment runner: configuration, seeded parallel replication,
//! statistics and file output.

pub mod config;
pub mod experiments;
pub mod output;
pub mod stats;

pub use config::{ExperimentConfig, ExperimentKind, ModelConfig};
pub use experiments::{run_experiment, DivergenceTally, ObservableStats, RunReport};
pub use stats::{order_of_accuracy, variance_estimator};
