//! Client for chat-completion style HTTP inference servers.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use tracing::{debug, trace};

use super::backend::{BackendError, BackendParams, ChatBackend};
use crate::prompt::{sha256_hex, ChatMessage, PromptBundle};

pub const ENV_ENDPOINT: &str = "TRAFFIC_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "TRAFFIC_LLM_API_KEY";
pub const ENV_MODEL: &str = "TRAFFIC_LLM_MODEL";
pub const ENV_TIMEOUT_SECS: &str = "TRAFFIC_LLM_TIMEOUT_SECS";

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: Option<ChoiceMessage>,
    /// Completion-style servers put the text here instead.
    text: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

#[derive(Debug, Clone)]
pub struct HttpBackend {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            agent,
        }
    }

    /// Reads endpoint, model and key from the environment; `None` when no
    /// endpoint is configured.
    pub fn from_env() -> Option<Self> {
        let endpoint = std::env::var(ENV_ENDPOINT).ok().filter(|s| !s.is_empty())?;
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| "default".into());
        let key = std::env::var(ENV_API_KEY).ok().filter(|s| !s.is_empty());
        Some(Self::new(endpoint, model, key))
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn http_complete(&self, bundle: &PromptBundle, params: &BackendParams) -> Result<String, BackendError> {
        let request = ChatRequest {
            model: &self.model,
            messages: bundle.messages(),
            temperature: params.temperature,
            max_tokens: params.max_new_tokens,
        };
        let body = serde_json::to_vec(&request).map_err(|e| BackendError::transport(e.to_string()))?;
        debug!(
            endpoint = %self.endpoint,
            messages = request.messages.len(),
            prompt_sha256 = %sha256_hex(&body),
            "sending chat completion"
        );
        trace!(user = %bundle.user, "prompt body");

        let mut req = self
            .agent
            .post(&self.endpoint)
            .config()
            .timeout_global(Some(params.request_timeout))
            .build()
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = req.send(&body[..]).map_err(map_transport_error)?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(map_transport_error)?;
        debug!(status, response_sha256 = %sha256_hex(text.as_bytes()), "chat completion returned");
        if !(200..300).contains(&status) {
            return Err(BackendError::http_status(status, &text));
        }
        extract_choice_text(&text)
    }
}

fn map_transport_error(err: ureq::Error) -> BackendError {
    match err {
        ureq::Error::Timeout(t) => BackendError::timeout(format!("timed out ({t})")),
        ureq::Error::StatusCode(code) => BackendError::http_status(code, ""),
        other => BackendError::transport(other.to_string()),
    }
}

/// Assistant text of the first choice.
pub fn extract_choice_text(body: &str) -> Result<String, BackendError> {
    let parsed: ChatResponse = serde_json::from_str(body)
        .map_err(|e| BackendError::empty_response(format!("malformed response body: {e}")))?;
    let first = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| BackendError::empty_response("response has no choices"))?;
    let text = first
        .message
        .and_then(|m| m.content)
        .or(first.text)
        .ok_or_else(|| BackendError::empty_response("first choice has no content"))?;
    if text.trim().is_empty() {
        return Err(BackendError::empty_response("first choice is blank"));
    }
    Ok(text)
}

impl ChatBackend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, bundle: &PromptBundle, params: &BackendParams) -> Result<String, BackendError> {
        self.http_complete(bundle, params)
    }
}

/// Parses the timeout variable, if set.
pub fn timeout_from_env() -> Option<Duration> {
    std::env::var(ENV_TIMEOUT_SECS)
        .ok()
        .and_then(|s| s.parse::<f64>().ok())
        .and_then(|s| Duration::try_from_secs_f64(s).ok())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_choice_content_is_extracted() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"hello"}},{"message":{"content":"no"}}]}"#;
        assert_eq!(extract_choice_text(body).unwrap(), "hello");
    }

    #[test]
    fn zero_choices_is_empty_response() {
        let err = extract_choice_text(r#"{"choices":[]}"#).unwrap_err();
        assert_eq!(err.kind, super::super::BackendErrorKind::EmptyResponse);
        let err = extract_choice_text("not json").unwrap_err();
        assert_eq!(err.kind, super::super::BackendErrorKind::EmptyResponse);
    }

    #[test]
    fn request_body_has_chat_completion_shape() {
        let bundle = PromptBundle {
            system: "sys".into(),
            few_shots: vec![],
            user: "hi".into(),
        };
        let req = ChatRequest {
            model: "m",
            messages: bundle.messages(),
            temperature: 0.95,
            max_tokens: 64,
        };
        let v = serde_json::to_value(&req).unwrap();
        assert_eq!(v["model"], "m");
        assert_eq!(v["messages"][0]["role"], "system");
        assert_eq!(v["messages"][1]["content"], "hi");
        assert_eq!(v["max_tokens"], 64);
    }
}
