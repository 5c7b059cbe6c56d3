//! Concurrent prediction over a task list with per-task retries.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use super::backend::{BackendParams, ChatBackend};
use super::parse::parse_prediction;
use crate::model::{PredictionResult, PredictionTask};
use crate::prompt::{ExplanationExample, PromptCompiler};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOptions {
    /// Maximum number of in-flight backend calls.
    pub parallelism: usize,
    /// Extra attempts after the first one.
    pub max_retries: u32,
    /// Base delay before retrying a backend error; doubles per attempt.
    #[serde(skip)]
    pub backoff: Duration,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            parallelism: 4,
            max_retries: 3,
            backoff: Duration::from_millis(250),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskFailure {
    pub task_id: String,
    pub attempts: u32,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BatchOutcome {
    /// Successful results in input order.
    pub results: Vec<PredictionResult>,
    /// Failed tasks in input order.
    pub failures: Vec<TaskFailure>,
}

const MAX_BACKOFF: Duration = Duration::from_secs(30);

fn predict_one(
    compiler: &PromptCompiler<'_>,
    task: &PredictionTask,
    examples: &[ExplanationExample],
    backend: &dyn ChatBackend,
    params: &BackendParams,
    opts: &BatchOptions,
) -> Result<PredictionResult, TaskFailure> {
    let bundle = compiler.bundle(task, examples).map_err(|e| TaskFailure {
        task_id: task.id.clone(),
        attempts: 0,
        error: format!("prompt: {e}"),
    })?;
    let max_attempts = opts.max_retries + 1;
    let mut last_error = String::new();
    for attempt in 1..=max_attempts {
        match backend.complete(&bundle, params) {
            Ok(raw) => match parse_prediction(&raw, task.horizon) {
                Ok(parsed) => {
                    return Ok(PredictionResult {
                        task_id: task.id.clone(),
                        values: parsed.values,
                        explanation: parsed.explanation,
                        raw,
                        attempts: attempt,
                        warnings: parsed.warnings,
                    })
                }
                Err(e) => {
                    debug!(task = %task.id, attempt, error = %e, "unparsable model output");
                    last_error = format!("parse: {e}");
                }
            },
            Err(e) => {
                debug!(task = %task.id, attempt, error = %e, "backend call failed");
                last_error = format!("backend: {e}");
                if !e.retryable {
                    return Err(TaskFailure {
                        task_id: task.id.clone(),
                        attempts: attempt,
                        error: last_error,
                    });
                }
                if attempt < max_attempts && !opts.backoff.is_zero() {
                    let delay = opts.backoff.saturating_mul(1 << (attempt - 1).min(16));
                    std::thread::sleep(delay.min(MAX_BACKOFF));
                }
            }
        }
    }
    Err(TaskFailure {
        task_id: task.id.clone(),
        attempts: max_attempts,
        error: last_error,
    })
}

/// Renders, completes and parses every task. Every input task ends up in
/// exactly one of `results` or `failures`.
pub fn predict_batch(
    tasks: &[PredictionTask],
    examples: &[ExplanationExample],
    backend: &dyn ChatBackend,
    params: &BackendParams,
    opts: &BatchOptions,
) -> BatchOutcome {
    let compiler = PromptCompiler::default();
    predict_batch_with(&compiler, tasks, examples, backend, params, opts)
}

pub fn predict_batch_with(
    compiler: &PromptCompiler<'_>,
    tasks: &[PredictionTask],
    examples: &[ExplanationExample],
    backend: &dyn ChatBackend,
    params: &BackendParams,
    opts: &BatchOptions,
) -> BatchOutcome {
    let workers = opts.parallelism.clamp(1, tasks.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<PredictionResult, TaskFailure>>>> =
        tasks.iter().map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                let Some(task) = tasks.get(idx) else { break };
                let outcome = predict_one(compiler, task, examples, backend, params, opts);
                *slots[idx].lock().expect("slot lock poisoned") = Some(outcome);
            });
        }
    });

    let mut outcome = BatchOutcome::default();
    for (slot, task) in slots.into_iter().zip(tasks) {
        match slot.into_inner().expect("slot lock poisoned") {
            Some(Ok(result)) => outcome.results.push(result),
            Some(Err(failure)) => {
                warn!(task = %failure.task_id, attempts = failure.attempts, error = %failure.error, "task failed");
                outcome.failures.push(failure)
            }
            None => outcome.failures.push(TaskFailure {
                task_id: task.id.clone(),
                attempts: 0,
                error: "worker exited before running task".into(),
            }),
        }
    }
    outcome
}
