//! Error metrics, breakdowns, classical baselines and report files.

mod baseline;
mod metrics;
mod report;

use std::path::PathBuf;

use thiserror::Error;

pub use baseline::{baseline_historical_average, baseline_persistence, baseline_result, HistoricalAverage};
pub use metrics::{
    breakdown, breakdown_by_step, compute_metrics, is_peak_hour, metrics_of, pair_results, CompensatedSum, DayType,
    Dimension, EvalPair, Metrics, PEAK_HOURS,
};
pub use report::{
    emit_report, per_horizon_report, read_report_csv, read_report_json, write_key_mape_csv, MetricReport, ReportFormat,
    ReportRow, METRIC_REPORT_SCHEMA, REPORT_SCHEMA_VERSION, SUMMARY_STEPS,
};

use crate::io::IoError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no samples")]
    NoSamples,
    #[error("task {task_id}: prediction has {found} values, expected {expected}")]
    LengthMismatch {
        task_id: String,
        expected: usize,
        found: usize,
    },
    #[error("unknown breakdown dimension {0:?}")]
    UnknownDimension(String),
    #[error("unknown report format {0:?}")]
    Format(String),
    #[error("training split has no observations")]
    EmptyTraining,
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] IoError),
}
