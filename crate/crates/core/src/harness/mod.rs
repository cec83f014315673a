//! Experiment configuration, runs, sweeps, rolling metrics and persistence.

pub mod config;
pub mod csvio;
pub mod metrics;
pub mod replicate;
pub mod run;
pub mod sweep;

pub use config::{EnvironmentConfig, ExperimentConfig, StepSizeConfig, SweepGrid};
pub use csvio::{load_run, read_series_csv, save_run, write_json, write_series_csv, write_sweep_csv, RunRecord};
pub use metrics::{empirical_cvar, rolling_fraction, rolling_metrics, RollingMetrics};
pub use replicate::{replicate, tuned_pendulum_config, tuned_rpbp_config, Figure, ReplicateOptions, ReplicateSummary};
pub use run::{run, summarize, uniform_random_rewards, RunFailure, RunResult, RunSummary};
pub use sweep::{grid_cells, parallel_map, run_seeds, sweep, SweepCell, SweepRow, SweepTable};
