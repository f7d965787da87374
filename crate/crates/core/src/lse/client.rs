use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::prompt::PromptBundle;
use super::select::{contains_phrase, tokens};

pub const API_KEY_ENV: &str = "DG_LLM_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("environment variable {0} is not set")]
    MissingKey(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("HTTP status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Response(String),
}

impl LlmError {
    fn retryable(&self) -> bool {
        match self {
            LlmError::Transport(_) => true,
            LlmError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// Text completion backend. Implementations must be usable from several
/// threads when batch augmentation runs requests concurrently.
pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, LlmError>;
}

/// Offline stand-in: appends `, near the <class>` for the first two distinct
/// context classes other than the target class. The output is a function of
/// the prompt alone.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockLlm;

pub const MOCK_MAX_ANCHORS: usize = 2;

pub fn mock_llm(prompt: &PromptBundle) -> String {
    let target = tokens(&prompt.target_class);
    let mut picked: Vec<&str> = Vec::new();
    for class in &prompt.context_classes {
        if picked.len() == MOCK_MAX_ANCHORS {
            break;
        }
        if tokens(class) == target || picked.contains(&class.as_str()) {
            continue;
        }
        picked.push(class);
    }
    let mut out = prompt.raw.clone();
    for class in picked {
        out.push_str(", near the ");
        out.push_str(class);
    }
    out
}

impl LlmClient for MockLlm {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, LlmError> {
        Ok(mock_llm(prompt))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    /// Chat-completions URL.
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default)]
    pub temperature: f64,
}

fn default_key_env() -> String {
    API_KEY_ENV.into()
}
fn default_timeout() -> u64 {
    60
}
fn default_in_flight() -> usize {
    4
}
fn default_retries() -> u32 {
    3
}

/// OpenAI-style JSON chat-completions client with exponential backoff.
pub struct HttpLlm {
    config: LlmConfig,
    api_key: String,
    http: reqwest::blocking::Client,
}

impl std::fmt::Debug for HttpLlm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpLlm")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: String,
}

impl HttpLlm {
    /// Reads the API key from the configured environment variable.
    pub fn from_env(config: LlmConfig) -> Result<Self, LlmError> {
        let api_key = std::env::var(&config.api_key_env)
            .map_err(|_| LlmError::MissingKey(config.api_key_env.clone()))?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(Self {
            config,
            api_key,
            http,
        })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    fn request_once(&self, prompt: &PromptBundle) -> Result<String, LlmError> {
        let mut messages = Vec::new();
        if !prompt.system.is_empty() {
            messages.push(serde_json::json!({"role": "system", "content": prompt.system}));
        }
        messages.push(serde_json::json!({"role": "user", "content": prompt.user}));
        let body = serde_json::json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
        });
        let resp = self
            .http
            .post(&self.config.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(LlmError::Status {
                status: status.as_u16(),
                body,
            });
        }
        let parsed: ChatResponse = resp.json().map_err(|e| LlmError::Response(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| LlmError::Response("no choices".into()))
    }
}

impl LlmClient for HttpLlm {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, LlmError> {
        let mut attempt = 0;
        loop {
            match self.request_once(prompt) {
                Err(e) if e.retryable() && attempt < self.config.retries => {
                    std::thread::sleep(Duration::from_millis(500 << attempt));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// Why an LLM output was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateFailure {
    Empty,
    MissingTargetClass,
}

impl GateFailure {
    pub fn as_str(self) -> &'static str {
        match self {
            GateFailure::Empty => "empty-output",
            GateFailure::MissingTargetClass => "target-class-missing",
        }
    }
}

/// Output must be non-empty and still name the target class.
pub fn consistency_gate(output: &str, target_class: &str) -> Result<(), GateFailure> {
    if output.trim().is_empty() {
        return Err(GateFailure::Empty);
    }
    if !contains_phrase(&tokens(output), target_class) {
        return Err(GateFailure::MissingTargetClass);
    }
    Ok(())
}
