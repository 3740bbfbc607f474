//! Batch experiment runner around `forecast-core`: CSV ingestion, JSON
//! experiment configuration, synthetic data generation, multi-station
//! orchestration with a bounded worker pool, and report emission.

mod config;
mod csv;
mod error;
mod experiment;
mod stats_cmd;
mod synth;

pub use config::{ExperimentConfig, ModelKind, StationSpec};
pub use csv::{ingest_csv, read_metrics_csv, write_series_csv};
pub use error::CliError;
pub use experiment::{
    run_experiment, Provenance, Report, RunRecord, RunTiming, StationInfo, StudyOutcome,
    TwoStepSection,
};
pub use stats_cmd::{stats_only, stats_only_from_table, MetricsTable};
pub use synth::{generate_synthetic, SyntheticKind};
