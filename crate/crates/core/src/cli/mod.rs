//! Configuration, experiment orchestration and report rendering.

pub mod config;
pub mod experiment;
pub mod report;

pub use config::{parse_assignment, parse_config, CheckpointPolicy, ExperimentConfig, SplitMode};
pub use experiment::{
    expected_band, job_seed, repetition_seed, run_experiment, run_job, JobOutput, ModeReport, RepetitionData,
    ReportCell, RowReport, RunEntry, RunReport, Timings, ROW_NAMES,
};
pub use report::{parse_json, render_json, render_report, render_text, ReportFormat};
