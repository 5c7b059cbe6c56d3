//! Deterministic, network-free stand-in for a chat model.

use std::sync::OnceLock;

use regex::Regex;

use super::backend::{BackendError, BackendParams, ChatBackend};
use crate::prompt::{render_target, PromptBundle};

/// Answers every prompt by sliding from the last observed volume to the
/// history mean over the forecast window. Ignores sampling parameters.
#[derive(Debug, Default, Clone, Copy)]
pub struct MockBackend;

fn history_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"in the past (\d+) hours were ([0-9][0-9, and]*), respectively").expect("valid regex")
    })
}

fn horizon_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"predict traffic volumes in the next (\d+) hours").expect("valid regex"))
}

/// Step `i` (0-based) of `horizon` is `last + (mean - last) * i / (horizon - 1)`.
pub fn mock_forecast(history: &[u32], horizon: usize) -> Vec<u32> {
    let Some(&last) = history.last() else {
        return vec![0; horizon];
    };
    let last = last as f64;
    let mean = history.iter().map(|&v| v as f64).sum::<f64>() / history.len() as f64;
    (0..horizon)
        .map(|i| {
            let t = if horizon > 1 {
                i as f64 / (horizon - 1) as f64
            } else {
                0.0
            };
            (last + (mean - last) * t).round().max(0.0) as u32
        })
        .collect()
}

pub fn mock_complete(bundle: &PromptBundle, _params: &BackendParams) -> Result<String, BackendError> {
    let caps = history_pattern()
        .captures(&bundle.user)
        .ok_or_else(|| BackendError::empty_response("mock backend: no history line in prompt"))?;
    let h_in: usize = caps[1]
        .parse()
        .map_err(|_| BackendError::empty_response("mock backend: bad history length"))?;
    let history: Vec<u32> = caps[2]
        .split(',')
        .flat_map(|part| part.split(" and "))
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|_| BackendError::empty_response("mock backend: unparsable history values"))?;
    if history.len() != h_in {
        return Err(BackendError::empty_response(format!(
            "mock backend: history line announces {h_in} values but lists {}",
            history.len()
        )));
    }
    let horizon = horizon_pattern()
        .captures(&bundle.user)
        .and_then(|c| c[1].parse().ok())
        .unwrap_or(12);
    let forecast = mock_forecast(&history, horizon);
    render_target(&forecast, horizon).map_err(|e| BackendError::empty_response(e.to_string()))
}

impl ChatBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, bundle: &PromptBundle, params: &BackendParams) -> Result<String, BackendError> {
        mock_complete(bundle, params)
    }
}
