//! Experiment orchestration: configuration, statistics, CSV/manifest output
//! and the cell runner used by the CLI.

pub mod config;
pub mod experiments;
pub mod output;
pub mod stats;

pub use config::{ExperimentConfig, LawMode, PsiKind};
pub use experiments::{run_experiment, ExperimentKind, RunReport};
