//! Experiment orchestration: configuration, file formats, runs, exports and
//! comparisons.

pub mod compare;
pub mod config;
pub mod export;
pub mod metrics;
pub mod persist;
pub mod run;

pub use compare::{compare_runs, Comparison, ComparisonRow, RunSummary, Stat};
pub use config::{load_model, ExperimentConfig, CONFIG_SCHEMA};
pub use export::{export_curve, export_radar, export_scree};
pub use metrics::{read_curve, MetricLog};
pub use persist::{
    load_basis, load_checkpoint, load_history, save_basis, save_checkpoint, save_history,
    truncate_basis, Checkpoint,
};
pub use run::{evaluate_checkpoint, resolve_basis, run_experiment, run_single, RunOutcome};
