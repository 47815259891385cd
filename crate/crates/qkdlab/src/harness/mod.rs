//! Experiment configuration, batch drivers, and report emission.

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{
    ExperimentConfig, ExperimentKind, IllegitimateKind, ReportFormat, SiftSweepConfig, Tolerances,
};
pub use experiments::{
    compute_row, compute_rows, replay, run_experiment, ExperimentOutcome, ReplayOutput, RowRef,
};
pub use report::{MetricValue, ReportRow, Summary, ARTIFACT_VERSION};
