//! Raw file loading, hourly resampling, windowing and dataset assembly.

mod flow;
mod holidays;
mod sources;
mod windows;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

pub use flow::{load_flow, read_flow_records, resample_hourly, RawFlowRecord};
pub use holidays::{lookup_holiday, HolidayTable, HOLIDAY_YEARS};
pub use sources::{load_poi, load_sensors, load_weather, DailyWeather, WeatherTable};
pub use windows::{filter_dead_windows, is_dead, make_windows, Window, Windowing, DEAD_RUN_HOURS};

use crate::io::{read_jsonl, write_jsonl, IoError};
use crate::model::{
    CalendarContext, FlowSeries, LabeledTask, LocalHour, PoIProfile, PredictionTask, PromptOptions, RegionAttributes,
    SensorMeta, ValidationError,
};
use crate::select::{
    featurize_poi, kmeans, select_representatives, summarize_region, BucketTable, ClusterResult, PoIFeatureVector,
    SelectError, DEFAULT_SHARE_THRESHOLD, DEFAULT_TOP_N,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{0}: no records")]
    NoRecords(PathBuf),
    #[error("{path}:{line}: {message}")]
    Malformed { path: PathBuf, line: u64, message: String },
    #[error("{path}:{line}: timestamps for sensor {sensor_id} are not strictly increasing")]
    NonMonotone {
        path: PathBuf,
        line: u64,
        sensor_id: String,
    },
    #[error("{path}: unknown schema, expected header {expected:?} but found {found:?}")]
    Schema {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("granularity of {0} minutes does not divide 60")]
    Granularity(u32),
    #[error("hourly volume for sensor {sensor_id} at {hour} overflows")]
    Overflow { sensor_id: String, hour: LocalHour },
    #[error("invalid window parameters h_in={h_in}, h_out={h_out}, stride={stride}")]
    WindowParams { h_in: usize, h_out: usize, stride: usize },
    #[error("{0} is outside the holiday table coverage")]
    HolidayCoverage(NaiveDate),
    #[error("sensor {0} appears in more than one flow file")]
    DuplicateSensor(String),
    #[error("sensor {0} has flow data but no metadata row")]
    MissingSensorMeta(String),
    #[error("no flow files (*.csv) in {0}")]
    NoFlowFiles(PathBuf),
    #[error("dataset config: {0}")]
    Config(String),
    #[error("sensor selection: {0}")]
    Select(#[from] SelectError),
    #[error("task {id}: {source}")]
    InvalidTask {
        id: String,
        #[source]
        source: ValidationError,
    },
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Train and test tasks with their ground truth.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<LabeledTask>,
    pub test: Vec<LabeledTask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub clusters: usize,
    pub top_n: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            clusters: 1,
            top_n: DEFAULT_TOP_N,
            seed: 0,
            max_iters: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub flow_granularity_minutes: u32,
    pub h_in: usize,
    pub horizon: usize,
    pub stride_hours: usize,
    pub train_years: Vec<i32>,
    pub test_years: Vec<i32>,
    pub share_threshold: f64,
    pub options: PromptOptions,
    /// When set, only cluster representatives are kept.
    pub selection: Option<SelectionConfig>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            flow_granularity_minutes: 15,
            h_in: 12,
            horizon: PredictionTask::DEFAULT_HORIZON,
            stride_hours: 1,
            train_years: vec![2018],
            test_years: vec![2019],
            share_threshold: DEFAULT_SHARE_THRESHOLD,
            options: PromptOptions::default(),
            selection: None,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errs = Vec::new();
        if self.flow_granularity_minutes == 0 || 60 % self.flow_granularity_minutes != 0 {
            errs.push(format!(
                "flow_granularity_minutes {} must divide 60",
                self.flow_granularity_minutes
            ));
        }
        if self.h_in == 0 || self.horizon == 0 || self.stride_hours == 0 {
            errs.push("h_in, horizon and stride_hours must be >= 1".into());
        }
        if self.train_years.is_empty() {
            errs.push("train_years must not be empty".into());
        }
        if let Some(y) = self.train_years.iter().find(|y| self.test_years.contains(y)) {
            errs.push(format!("year {y} is in both train_years and test_years"));
        }
        if !(self.share_threshold > 0.0 && self.share_threshold < 1.0) {
            errs.push(format!("share_threshold {} must be in (0, 1)", self.share_threshold));
        }
        if let Some(sel) = &self.selection {
            if sel.clusters == 0 {
                errs.push("selection.clusters must be >= 1".into());
            }
            if sel.top_n == 0 {
                errs.push("selection.top_n must be >= 1".into());
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetInputs {
    pub flow_dir: PathBuf,
    pub sensors_file: PathBuf,
    pub poi_file: Option<PathBuf>,
    pub weather_file: PathBuf,
    /// Category to bucket table; the bundled one when absent.
    pub bucket_table: Option<PathBuf>,
    /// `date,name` holiday table; the bundled one when absent.
    pub holidays: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub sensors: usize,
    pub windows: usize,
    pub skipped_missing: usize,
    pub short_series: usize,
    pub dead_windows: usize,
    /// Windows whose target hours span two years.
    pub straddling_windows: usize,
    /// Windows whose target year is in neither split.
    pub unassigned_windows: usize,
    pub missing_poi: Vec<String>,
    pub weather_filled: usize,
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub vectors: Vec<PoIFeatureVector>,
    pub result: ClusterResult,
    pub representatives: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltDataset {
    pub split: DatasetSplit,
    pub report: BuildReport,
    pub selection: Option<SelectionOutcome>,
}

pub fn task_id(sensor_id: &str, anchor: LocalHour) -> String {
    format!("{sensor_id}@{}", anchor.datetime().format("%Y-%m-%dT%H"))
}

fn flow_files(dir: &Path) -> Result<Vec<PathBuf>, IngestError> {
    let entries = std::fs::read_dir(dir).map_err(|e| IoError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| IoError::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "csv") {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(IngestError::NoFlowFiles(dir.to_path_buf()));
    }
    Ok(files)
}

fn run_selection(
    series: &[FlowSeries],
    profiles: &BTreeMap<String, PoIProfile>,
    cfg: &SelectionConfig,
) -> Result<SelectionOutcome, IngestError> {
    let candidates: Vec<PoIProfile> = series
        .iter()
        .filter_map(|s| profiles.get(&s.sensor_id).cloned())
        .collect();
    let vectors = featurize_poi(&candidates, cfg.top_n)?;
    let points: Vec<Vec<f64>> = vectors.iter().map(|v| v.features.clone()).collect();
    let result = kmeans(&points, cfg.clusters, cfg.seed, cfg.max_iters, cfg.tol)?;
    let representatives = select_representatives(&result, &vectors);
    Ok(SelectionOutcome {
        vectors,
        result,
        representatives,
    })
}

/// Loads every source and assembles labeled tasks split by target year.
/// Output order is by sensor id, then anchor hour.
pub fn build_dataset(inputs: &DatasetInputs, config: &DatasetConfig) -> Result<BuiltDataset, IngestError> {
    config.validate().map_err(|e| IngestError::Config(e.join("; ")))?;

    let mut series: Vec<FlowSeries> = Vec::new();
    let mut seen = BTreeSet::new();
    for file in flow_files(&inputs.flow_dir)? {
        for s in load_flow(&file, config.flow_granularity_minutes)? {
            if !seen.insert(s.sensor_id.clone()) {
                return Err(IngestError::DuplicateSensor(s.sensor_id));
            }
            series.push(s);
        }
    }
    series.sort_by(|a, b| a.sensor_id.cmp(&b.sensor_id));

    let sensors = load_sensors(&inputs.sensors_file)?;
    let metas: Vec<&SensorMeta> = series
        .iter()
        .map(|s| {
            sensors
                .get(&s.sensor_id)
                .ok_or_else(|| IngestError::MissingSensorMeta(s.sensor_id.clone()))
        })
        .collect::<Result<_, _>>()?;
    let profiles = match &inputs.poi_file {
        Some(p) => load_poi(p)?,
        None => BTreeMap::new(),
    };
    let weather = load_weather(&inputs.weather_file)?;
    let buckets = match &inputs.bucket_table {
        Some(p) => BucketTable::load(p)?,
        None => BucketTable::bundled(),
    };

    let loaded_holidays = inputs.holidays.as_deref().map(HolidayTable::load).transpose()?;
    let holidays = loaded_holidays.as_ref().unwrap_or_else(|| HolidayTable::bundled());

    let selection = match &config.selection {
        Some(cfg) => Some(run_selection(&series, &profiles, cfg)?),
        None => None,
    };
    let keep: Option<BTreeSet<&str>> = selection
        .as_ref()
        .map(|s| s.representatives.iter().map(String::as_str).collect());

    let mut report = BuildReport::default();
    let mut split = DatasetSplit::default();
    for (s, meta) in series.iter().zip(metas) {
        if keep.as_ref().is_some_and(|k| !k.contains(s.sensor_id.as_str())) {
            continue;
        }
        report.sensors += 1;
        let region = match profiles.get(&s.sensor_id) {
            Some(p) => summarize_region(p, config.share_threshold, &buckets)?,
            None => {
                report.missing_poi.push(s.sensor_id.clone());
                RegionAttributes::default()
            }
        };
        let windowing = make_windows(s, config.h_in, config.horizon, config.stride_hours)?;
        report.skipped_missing += windowing.skipped_missing;
        report.short_series += windowing.too_short as usize;
        report.windows += windowing.windows.len();
        let before = windowing.windows.len();
        let alive = filter_dead_windows(windowing.windows);
        report.dead_windows += before - alive.len();

        for w in alive {
            let first_year = w.anchor.plus_hours(1).date().year();
            let last_year = w.anchor.plus_hours(config.horizon as i64).date().year();
            if first_year != last_year {
                report.straddling_windows += 1;
                continue;
            }
            let into_train = config.train_years.contains(&first_year);
            if !into_train && !config.test_years.contains(&first_year) {
                report.unassigned_windows += 1;
                continue;
            }
            let (weather_rec, filled) = weather.lookup(w.anchor).expect("weather table is non-empty");
            report.weather_filled += filled as usize;
            let holiday = holidays.lookup(w.anchor.date())?.map(str::to_string);
            let id = task_id(&s.sensor_id, w.anchor);
            let task = PredictionTask {
                id: id.clone(),
                meta: meta.clone(),
                region: region.clone(),
                weather: weather_rec,
                calendar: CalendarContext::new(w.anchor, holiday),
                h_in: config.h_in,
                history: w.history,
                horizon: config.horizon,
                options: config.options,
                scenario: None,
            };
            let labeled = LabeledTask { task, target: w.target };
            labeled
                .validate()
                .map_err(|source| IngestError::InvalidTask { id, source })?;
            if into_train {
                split.train.push(labeled);
            } else {
                split.test.push(labeled);
            }
        }
    }
    report.train = split.train.len();
    report.test = split.test.len();
    if !report.missing_poi.is_empty() {
        warn!(
            count = report.missing_poi.len(),
            "sensors without PoI profile get empty region attributes"
        );
    }
    if report.weather_filled > 0 {
        warn!(count = report.weather_filled, "tasks used nearest-day weather");
    }
    info!(
        train = report.train,
        test = report.test,
        dead = report.dead_windows,
        "dataset built"
    );
    Ok(BuiltDataset {
        split,
        report,
        selection,
    })
}

pub fn write_tasks(path: &Path, tasks: &[LabeledTask]) -> Result<(), IngestError> {
    Ok(write_jsonl(path, tasks)?)
}

/// Reads a task JSONL file and validates every line.
pub fn read_tasks(path: &Path) -> Result<Vec<LabeledTask>, IngestError> {
    let tasks: Vec<LabeledTask> = read_jsonl(path)?;
    for t in &tasks {
        t.validate().map_err(|source| IngestError::InvalidTask {
            id: t.task.id.clone(),
            source,
        })?;
    }
    Ok(tasks)
}
