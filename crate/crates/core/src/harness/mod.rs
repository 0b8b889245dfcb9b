//! Replicated experiments: configuration, seed ladder, sweeps over `n` and
//! `β`, aggregation, persistence and reporting.

pub mod acceptance;
pub mod config;
pub mod report;
pub mod sweep;

pub use config::{Backend, ExperimentConfig, VolumeConfig, SCHEMA_VERSION};
pub use report::{report, Report};
pub use sweep::{
    data_seed, mcmc_seed, prior_volume_seed, read_rows, run_replication, run_sweep, summarize, summarize_cell,
    write_rows, xquad_seed, CellSummary, Experiment, SweepResult, CONFIG_JSON, RAW_CSV, SUMMARY_JSON, VOLUME_JSON,
};
