//! Experiment orchestration: configuration, seeded parallel execution and persistence.

pub mod config;
pub mod parallel;
pub mod run;

pub use config::{ExperimentConfig, ExperimentKind};
pub use parallel::{parallel_map, TaskFailure};
pub use run::{run_experiment, RunManifest, RunStatus};
