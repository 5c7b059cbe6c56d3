use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ValidationError;
use crate::prompt::PromptBundle;

/// Sampling and transport parameters passed to every backend call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendParams {
    pub temperature: f64,
    pub max_new_tokens: u32,
    #[serde(with = "duration_secs")]
    pub request_timeout: Duration,
}

impl Default for BackendParams {
    fn default() -> Self {
        Self {
            temperature: 0.95,
            max_new_tokens: 512,
            request_timeout: Duration::from_secs(120),
        }
    }
}

impl BackendParams {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ValidationError::new(
                "temperature",
                format!("{} outside [0, 2]", self.temperature),
            ));
        }
        if self.max_new_tokens == 0 {
            return Err(ValidationError::new("max_new_tokens", "must be positive"));
        }
        Ok(())
    }
}

mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendErrorKind {
    Timeout,
    Transport,
    HttpStatus,
    EmptyResponse,
}

impl fmt::Display for BackendErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Timeout => "timeout",
            Self::Transport => "transport",
            Self::HttpStatus => "http_status",
            Self::EmptyResponse => "empty_response",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind}: {detail}")]
pub struct BackendError {
    pub kind: BackendErrorKind,
    pub detail: String,
    pub retryable: bool,
}

impl BackendError {
    pub fn timeout(detail: impl Into<String>) -> Self {
        Self {
            kind: BackendErrorKind::Timeout,
            detail: detail.into(),
            retryable: true,
        }
    }

    pub fn transport(detail: impl Into<String>) -> Self {
        Self {
            kind: BackendErrorKind::Transport,
            detail: detail.into(),
            retryable: true,
        }
    }

    /// Rate limits, request timeouts and server errors are retryable.
    pub fn http_status(code: u16, body: &str) -> Self {
        let retryable = code == 408 || code == 429 || (500..600).contains(&code);
        let mut snippet: String = body.chars().take(200).collect();
        if snippet.len() < body.len() {
            snippet.push_str("...");
        }
        Self {
            kind: BackendErrorKind::HttpStatus,
            detail: format!("HTTP {code}: {snippet}"),
            retryable,
        }
    }

    pub fn empty_response(detail: impl Into<String>) -> Self {
        Self {
            kind: BackendErrorKind::EmptyResponse,
            detail: detail.into(),
            retryable: true,
        }
    }
}

/// A chat-style text generator. Implementations must tolerate concurrent
/// calls from the batch runner.
pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, bundle: &PromptBundle, params: &BackendParams) -> Result<String, BackendError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, bundle: &PromptBundle, params: &BackendParams) -> Result<String, BackendError> {
        (**self).complete(bundle, params)
    }
}

pub fn complete(
    backend: &dyn ChatBackend,
    bundle: &PromptBundle,
    params: &BackendParams,
) -> Result<String, BackendError> {
    backend.complete(bundle, params)
}
