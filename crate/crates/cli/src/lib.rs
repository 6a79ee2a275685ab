//! Experiment orchestration behind the `resshare` command.

pub mod analyze;
pub mod config;
pub mod plotdata;
pub mod run;
pub mod table;

pub use analyze::{cmd_analyze, AnalysisReport};
pub use config::{AlgorithmName, ExperimentConfig};
pub use plotdata::cmd_plotdata;
pub use run::{cmd_run, run_experiment, RunOutcome};
