use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::model::{LabeledTask, PredictionResult, WeatherCondition};

/// Local hours counted as peak: 7-9 AM and 4-6 PM.
pub const PEAK_HOURS: [u32; 6] = [7, 8, 9, 16, 17, 18];

pub fn is_peak_hour(hour: u32) -> bool {
    PEAK_HOURS.contains(&hour)
}

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    /// Percent over cells with non-zero ground truth; `None` when there are none.
    pub mape: Option<f64>,
    pub count: usize,
    /// Cells left out of MAPE because the ground truth was zero.
    pub mape_excluded: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct Accumulator {
    abs: CompensatedSum,
    sq: CompensatedSum,
    ape: CompensatedSum,
    n: usize,
    n_pos: usize,
}

impl Accumulator {
    fn push(&mut self, y: f64, y_hat: f64) {
        let e = y_hat - y;
        self.abs.add(e.abs());
        self.sq.add(e * e);
        self.n += 1;
        if y != 0.0 {
            self.ape.add((e / y).abs());
            self.n_pos += 1;
        }
    }

    fn finish(&self) -> Result<Metrics, EvalError> {
        if self.n == 0 {
            return Err(EvalError::NoSamples);
        }
        let n = self.n as f64;
        let mae = self.abs.value() / n;
        // all-equal errors can leave the root an ulp below the mean
        let rmse = (self.sq.value() / n).sqrt().max(mae);
        let mape = (self.n_pos > 0).then(|| 100.0 * self.ape.value() / self.n_pos as f64);
        Ok(Metrics {
            rmse,
            mae,
            mape,
            count: self.n,
            mape_excluded: self.n - self.n_pos,
        })
    }
}

/// RMSE, MAE and MAPE over `(y, y_hat)` cells.
pub fn metrics_of<I>(cells: I) -> Result<Metrics, EvalError>
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let mut acc = Accumulator::default();
    for (y, y_hat) in cells {
        acc.push(y, y_hat);
    }
    acc.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayType {
    Weekday,
    Weekend,
}

impl DayType {
    pub fn of(weekday: Weekday) -> Self {
        match weekday {
            Weekday::Sat | Weekday::Sun => Self::Weekend,
            _ => Self::Weekday,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Weekday => "weekday",
            Self::Weekend => "weekend",
        }
    }
}

/// One prediction lined up with its ground truth and breakdown tags.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub task_id: String,
    pub sensor_id: String,
    pub date: NaiveDate,
    pub day_type: DayType,
    pub weather: WeatherCondition,
    /// Local hour of day of each predicted step.
    pub step_hours: Vec<u32>,
    pub y: Vec<u32>,
    pub y_hat: Vec<u32>,
}

impl EvalPair {
    pub fn new(labeled: &LabeledTask, prediction: &[u32]) -> Result<Self, EvalError> {
        let task = &labeled.task;
        if prediction.len() != labeled.target.len() {
            return Err(EvalError::LengthMismatch {
                task_id: task.id.clone(),
                expected: labeled.target.len(),
                found: prediction.len(),
            });
        }
        let anchor = task.anchor();
        Ok(Self {
            task_id: task.id.clone(),
            sensor_id: task.meta.sensor_id.clone(),
            date: anchor.date(),
            day_type: DayType::of(anchor.weekday()),
            weather: task.weather.condition,
            step_hours: (1..=labeled.target.len()).map(|s| task.step_hour(s).hour()).collect(),
            y: labeled.target.clone(),
            y_hat: prediction.to_vec(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.y.len()
    }

    /// Breakdown key of this pair's 0-based step `step` in `dim`.
    pub fn key(&self, dim: Dimension, step: usize) -> String {
        match dim {
            Dimension::Period => {
                if is_peak_hour(self.step_hours[step]) {
                    "peak".into()
                } else {
                    "off_peak".into()
                }
            }
            Dimension::DayType => self.day_type.as_str().into(),
            Dimension::Weather => self.weather.as_str().into(),
            Dimension::Sensor => self.sensor_id.clone(),
            Dimension::Date => format!(
                "{:04}-{:02}-{:02}",
                self.date.year(),
                self.date.month(),
                self.date.day()
            ),
        }
    }
}

/// Joins results to tasks by id. Returns the pairs in task order and the ids
/// of tasks without a result.
pub fn pair_results(
    tasks: &[LabeledTask],
    results: &[PredictionResult],
) -> Result<(Vec<EvalPair>, Vec<String>), EvalError> {
    let by_id: BTreeMap<&str, &PredictionResult> = results.iter().map(|r| (r.task_id.as_str(), r)).collect();
    let mut pairs = Vec::with_capacity(tasks.len());
    let mut missing = Vec::new();
    for t in tasks {
        match by_id.get(t.task.id.as_str()) {
            Some(r) => pairs.push(EvalPair::new(t, &r.values)?),
            None => missing.push(t.task.id.clone()),
        }
    }
    Ok((pairs, missing))
}

/// Metrics over every `(pair, step)` cell accepted by `filter`. Steps are
/// 0-based.
pub fn compute_metrics<F>(pairs: &[EvalPair], filter: F) -> Result<Metrics, EvalError>
where
    F: Fn(&EvalPair, usize) -> bool,
{
    let mut acc = Accumulator::default();
    for p in pairs {
        for step in 0..p.horizon() {
            if filter(p, step) {
                acc.push(p.y[step] as f64, p.y_hat[step] as f64);
            }
        }
    }
    acc.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Period,
    DayType,
    Weather,
    Sensor,
    Date,
}

impl Dimension {
    pub const ALL: [Dimension; 5] = [Self::Period, Self::DayType, Self::Weather, Self::Sensor, Self::Date];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Period => "period",
            Self::DayType => "day_type",
            Self::Weather => "weather",
            Self::Sensor => "sensor",
            Self::Date => "date",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|d| d.as_str() == s.trim())
            .ok_or_else(|| EvalError::UnknownDimension(s.to_string()))
    }
}

/// Metrics per key of `dim`, pooled over all steps. Keys with no cells are
/// absent.
pub fn breakdown(pairs: &[EvalPair], dim: Dimension) -> Result<BTreeMap<String, Metrics>, EvalError> {
    let mut accs: BTreeMap<String, Accumulator> = BTreeMap::new();
    for p in pairs {
        for step in 0..p.horizon() {
            accs.entry(p.key(dim, step))
                .or_default()
                .push(p.y[step] as f64, p.y_hat[step] as f64);
        }
    }
    accs.into_iter().map(|(k, a)| Ok((k, a.finish()?))).collect()
}

/// Like [`breakdown`] but split by 1-based step.
pub fn breakdown_by_step(
    pairs: &[EvalPair],
    dim: Dimension,
) -> Result<BTreeMap<String, BTreeMap<u32, Metrics>>, EvalError> {
    let mut accs: BTreeMap<String, BTreeMap<u32, Accumulator>> = BTreeMap::new();
    for p in pairs {
        for step in 0..p.horizon() {
            accs.entry(p.key(dim, step))
                .or_default()
                .entry(step as u32 + 1)
                .or_default()
                .push(p.y[step] as f64, p.y_hat[step] as f64);
        }
    }
    accs.into_iter()
        .map(|(k, steps)| {
            let steps = steps
                .into_iter()
                .map(|(s, a)| Ok((s, a.finish()?)))
                .collect::<Result<_, EvalError>>()?;
            Ok((k, steps))
        })
        .collect()
}
