use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::model::{FlowSeries, LocalHour};

/// Consecutive zero hours that mark a sensor as dead.
pub const DEAD_RUN_HOURS: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub sensor_id: String,
    pub history: Vec<u32>,
    pub target: Vec<u32>,
    /// Hour of the last history value.
    pub anchor: LocalHour,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Windowing {
    pub windows: Vec<Window>,
    /// Candidate positions skipped because they touch a missing hour.
    pub skipped_missing: usize,
    /// Set when the series is shorter than one window.
    pub too_short: bool,
}

/// Slides a `h_in + h_out` window over the series at `stride` hours.
pub fn make_windows(series: &FlowSeries, h_in: usize, h_out: usize, stride: usize) -> Result<Windowing, IngestError> {
    if h_in == 0 || h_out == 0 || stride == 0 {
        return Err(IngestError::WindowParams { h_in, h_out, stride });
    }
    let span = h_in + h_out;
    let mut out = Windowing::default();
    if series.len() < span {
        out.too_short = true;
        return Ok(out);
    }
    for start in (0..=series.len() - span).step_by(stride) {
        let slice = &series.values[start..start + span];
        let Some(values) = slice.iter().copied().collect::<Option<Vec<u32>>>() else {
            out.skipped_missing += 1;
            continue;
        };
        out.windows.push(Window {
            sensor_id: series.sensor_id.clone(),
            history: values[..h_in].to_vec(),
            target: values[h_in..].to_vec(),
            anchor: series.hour_at(start + h_in - 1),
        });
    }
    Ok(out)
}

fn longest_zero_run<'a>(values: impl Iterator<Item = &'a u32>) -> usize {
    let (mut best, mut run) = (0, 0);
    for &v in values {
        run = if v == 0 { run + 1 } else { 0 };
        best = best.max(run);
    }
    best
}

/// True when history followed by target contains 24 or more consecutive zeros.
pub fn is_dead(window: &Window) -> bool {
    longest_zero_run(window.history.iter().chain(&window.target)) >= DEAD_RUN_HOURS
}

/// Drops dead windows, keeping the order of the survivors.
pub fn filter_dead_windows(windows: Vec<Window>) -> Vec<Window> {
    windows.into_iter().filter(|w| !is_dead(w)).collect()
}
