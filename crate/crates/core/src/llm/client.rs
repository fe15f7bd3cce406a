use std::env;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::ChatMessage;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LlmError {
    #[error("transport error: {message}")]
    Transport { message: String },
    #[error("authentication rejected: {message}")]
    Auth { message: String },
    #[error("endpoint error{}: {body}", .status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Endpoint { status: Option<u16>, body: String },
}

impl LlmError {
    pub fn transport(message: impl Into<String>) -> Self {
        LlmError::Transport {
            message: message.into(),
        }
    }

    fn is_transient(&self) -> bool {
        match self {
            LlmError::Transport { .. } => true,
            LlmError::Endpoint {
                status: Some(status),
                ..
            } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// A chat-completion backend. Implementations must be shareable across
/// sessions; callers keep at most one request in flight per session.
pub trait ChatClient: Send + Sync {
    fn complete(&self, messages: &[ChatMessage], temperature: f64) -> Result<String, LlmError>;
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{0} must be a number: `{1}`")]
    NotANumber(&'static str, String),
    #[error("timeout must be greater than zero")]
    ZeroTimeout,
    #[error("temperature must be finite and non-negative, got {0}")]
    BadTemperature(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmClientConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    /// Used for planning and extension.
    pub temperature: f64,
    /// Used for the executing conversation.
    pub executing_temperature: f64,
    pub timeout: Duration,
    pub max_retries: u32,
    /// First retry delay; doubles on each further attempt.
    pub backoff_base: Duration,
}

impl Default for LlmClientConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".to_string(),
            model: "gpt-3.5-turbo".to_string(),
            api_key: None,
            temperature: 0.0,
            executing_temperature: 0.7,
            timeout: Duration::from_secs(60),
            max_retries: 2,
            backoff_base: Duration::from_millis(500),
        }
    }
}

fn env_number<T: std::str::FromStr>(
    name: &'static str,
    lookup: &impl Fn(&str) -> Option<String>,
) -> Result<Option<T>, ConfigError> {
    match lookup(name) {
        None => Ok(None),
        Some(raw) => raw
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| ConfigError::NotANumber(name, raw)),
    }
}

impl LlmClientConfig {
    /// Reads `LLM_ENDPOINT`, `LLM_API_KEY`, `LLM_MODEL`, `LLM_TIMEOUT_SECS`,
    /// plus the optional `LLM_MAX_RETRIES`, `LLM_TEMPERATURE` and
    /// `LLM_EXECUTING_TEMPERATURE`.
    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|name| env::var(name).ok().filter(|v| !v.is_empty()))
    }

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        if let Some(endpoint) = lookup("LLM_ENDPOINT") {
            cfg.endpoint = endpoint;
        }
        if let Some(model) = lookup("LLM_MODEL") {
            cfg.model = model;
        }
        cfg.api_key = lookup("LLM_API_KEY");
        if let Some(secs) = env_number::<f64>("LLM_TIMEOUT_SECS", &lookup)? {
            if secs.is_nan() || secs <= 0.0 || secs.is_infinite() {
                return Err(ConfigError::ZeroTimeout);
            }
            cfg.timeout = Duration::from_secs_f64(secs);
        }
        if let Some(retries) = env_number("LLM_MAX_RETRIES", &lookup)? {
            cfg.max_retries = retries;
        }
        if let Some(t) = env_number("LLM_TEMPERATURE", &lookup)? {
            cfg.temperature = t;
        }
        if let Some(t) = env_number("LLM_EXECUTING_TEMPERATURE", &lookup)? {
            cfg.executing_temperature = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.timeout.is_zero() {
            return Err(ConfigError::ZeroTimeout);
        }
        for t in [self.temperature, self.executing_temperature] {
            if !t.is_finite() || t < 0.0 {
                return Err(ConfigError::BadTemperature(t));
            }
        }
        Ok(())
    }
}

/// Client for OpenAI-style `chat/completions` endpoints.
pub struct HttpChatClient {
    cfg: LlmClientConfig,
    agent: ureq::Agent,
}

impl HttpChatClient {
    pub fn new(cfg: LlmClientConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { cfg, agent }
    }

    pub fn config(&self) -> &LlmClientConfig {
        &self.cfg
    }

    fn attempt(&self, body: &str) -> Result<String, LlmError> {
        let mut request = self
            .agent
            .post(&self.cfg.endpoint)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.cfg.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request
            .send(body)
            .map_err(|e| LlmError::transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| LlmError::transport(e.to_string()))?;
        match status {
            200..=299 => extract_content(&text).ok_or(LlmError::Endpoint {
                status: Some(status),
                body: text,
            }),
            401 | 403 => Err(LlmError::Auth { message: text }),
            _ => Err(LlmError::Endpoint {
                status: Some(status),
                body: text,
            }),
        }
    }
}

fn extract_content(body: &str) -> Option<String> {
    let value: Value = serde_json::from_str(body).ok()?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
}

impl ChatClient for HttpChatClient {
    fn complete(&self, messages: &[ChatMessage], temperature: f64) -> Result<String, LlmError> {
        let body = json!({
            "model": self.cfg.model,
            "messages": messages,
            "temperature": temperature,
        })
        .to_string();
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Err(e) if e.is_transient() && attempt < self.cfg.max_retries => {
                    let delay = self.cfg.backoff_base.saturating_mul(1 << attempt.min(16));
                    tracing::warn!(attempt, ?delay, error = %e, "retrying chat completion");
                    thread::sleep(delay);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// One-shot completion against the configured endpoint.
pub fn complete_chat(cfg: &LlmClientConfig, messages: &[ChatMessage]) -> Result<String, LlmError> {
    HttpChatClient::new(cfg.clone()).complete(messages, cfg.temperature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn config_from_lookup() {
        let vars: HashMap<&str, &str> = [
            ("LLM_ENDPOINT", "http://localhost:9/v1/chat/completions"),
            ("LLM_MODEL", "m"),
            ("LLM_API_KEY", "k"),
            ("LLM_TIMEOUT_SECS", "5"),
        ]
        .into_iter()
        .collect();
        let cfg = LlmClientConfig::from_lookup(|k| vars.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(cfg.model, "m");
        assert_eq!(cfg.api_key.as_deref(), Some("k"));
        assert_eq!(cfg.timeout, Duration::from_secs(5));
        assert_eq!(cfg.temperature, 0.0);
    }

    #[test]
    fn config_rejects_bad_values() {
        let zero = LlmClientConfig::from_lookup(|k| (k == "LLM_TIMEOUT_SECS").then(|| "0".into()));
        assert_eq!(zero, Err(ConfigError::ZeroTimeout));
        let nan = LlmClientConfig::from_lookup(|k| (k == "LLM_MAX_RETRIES").then(|| "x".into()));
        assert!(matches!(nan, Err(ConfigError::NotANumber(..))));
        let neg = LlmClientConfig::from_lookup(|k| (k == "LLM_TEMPERATURE").then(|| "-1".into()));
        assert!(matches!(neg, Err(ConfigError::BadTemperature(_))));
    }

    #[test]
    fn content_extraction() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"STEP 1: [A][B][]"}}]}"#;
        assert_eq!(extract_content(body).as_deref(), Some("STEP 1: [A][B][]"));
        assert_eq!(extract_content("{}"), None);
        assert_eq!(extract_content("not json"), None);
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        let cfg = LlmClientConfig {
            endpoint: "http://127.0.0.1:1/v1/chat/completions".into(),
            max_retries: 1,
            backoff_base: Duration::from_millis(1),
            timeout: Duration::from_secs(2),
            ..Default::default()
        };
        let err = complete_chat(&cfg, &[ChatMessage::user("hi")]).unwrap_err();
        assert!(matches!(err, LlmError::Transport { .. }), "{err:?}");
    }
}
