use std::collections::BTreeMap;

use super::metrics::CompensatedSum;
use super::EvalError;
use crate::model::{LabeledTask, LocalHour, PredictionResult, PredictionTask};
use crate::prompt::render_target;

#[derive(Debug, Clone, Copy, Default)]
struct Mean {
    sum: CompensatedSum,
    n: usize,
}

impl Mean {
    fn add(&mut self, v: f64) {
        self.sum.add(v);
        self.n += 1;
    }

    fn get(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum.value() / self.n as f64)
    }
}

/// Mean training volume by (sensor, weekday, hour) with fallbacks to
/// (sensor, hour) and then the global hour of day.
#[derive(Debug, Clone, Default)]
pub struct HistoricalAverage {
    by_weekday_hour: BTreeMap<(String, u32, u32), Mean>,
    by_hour: BTreeMap<(String, u32), Mean>,
    global_hour: BTreeMap<u32, Mean>,
    global: Mean,
}

impl HistoricalAverage {
    /// Fits on every observed hour of the training tasks. Overlapping windows
    /// repeat hours, so each (sensor, hour) is counted once.
    pub fn fit(train: &[LabeledTask]) -> Result<Self, EvalError> {
        let mut observed: BTreeMap<(&str, LocalHour), u32> = BTreeMap::new();
        for lt in train {
            let t = &lt.task;
            let sensor = t.meta.sensor_id.as_str();
            let start = t.history_start();
            for (i, &v) in t.history.iter().enumerate() {
                observed.entry((sensor, start.plus_hours(i as i64))).or_insert(v);
            }
            for (i, &v) in lt.target.iter().enumerate() {
                observed.entry((sensor, t.step_hour(i + 1))).or_insert(v);
            }
        }
        if observed.is_empty() {
            return Err(EvalError::EmptyTraining);
        }
        let mut model = Self::default();
        for ((sensor, at), v) in observed {
            let v = v as f64;
            let wd = at.weekday().num_days_from_monday();
            model
                .by_weekday_hour
                .entry((sensor.to_string(), wd, at.hour()))
                .or_default()
                .add(v);
            model.by_hour.entry((sensor.to_string(), at.hour())).or_default().add(v);
            model.global_hour.entry(at.hour()).or_default().add(v);
            model.global.add(v);
        }
        Ok(model)
    }

    pub fn predict_hour(&self, sensor_id: &str, at: LocalHour) -> u32 {
        let wd = at.weekday().num_days_from_monday();
        let key = sensor_id.to_string();
        let mean = self
            .by_weekday_hour
            .get(&(key.clone(), wd, at.hour()))
            .and_then(Mean::get)
            .or_else(|| self.by_hour.get(&(key, at.hour())).and_then(Mean::get))
            .or_else(|| self.global_hour.get(&at.hour()).and_then(Mean::get))
            .or_else(|| self.global.get())
            .unwrap_or(0.0);
        mean.round().max(0.0) as u32
    }

    pub fn predict(&self, task: &PredictionTask) -> Vec<u32> {
        (1..=task.horizon)
            .map(|s| self.predict_hour(&task.meta.sensor_id, task.step_hour(s)))
            .collect()
    }
}

/// Fits a [`HistoricalAverage`] on `train` and predicts `task`.
pub fn baseline_historical_average(train: &[LabeledTask], task: &PredictionTask) -> Result<Vec<u32>, EvalError> {
    Ok(HistoricalAverage::fit(train)?.predict(task))
}

/// Repeats the last observed volume over the horizon.
pub fn baseline_persistence(task: &PredictionTask) -> Vec<u32> {
    let last = task.history.last().copied().unwrap_or(0);
    vec![last; task.horizon]
}

/// Wraps baseline output in the same result shape the chat backends produce.
pub fn baseline_result(task: &PredictionTask, values: Vec<u32>) -> PredictionResult {
    let raw = render_target(&values, task.horizon).unwrap_or_default();
    PredictionResult {
        task_id: task.id.clone(),
        values,
        explanation: None,
        raw,
        attempts: 1,
        warnings: Vec::new(),
    }
}
