//! Completion endpoints: configuration, the HTTP chat client, and the
//! retrying classifier front-end.

use std::sync::Arc;
use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::mock::{MockBackend, MockMarkers};
use super::prompt::{parse_level, Prompt};
use super::LlmError;
use crate::corpus::Level;

/// How the prompt is framed on the wire.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WireMode {
    /// `POST <base>/v1/chat/completions` with system and user messages.
    #[default]
    Chat,
    /// `POST <base>/v1/completions` with the single-string instruction framing.
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmEndpoint {
    /// `http(s)://host[:port]` or `mock:[markers=<high>,<low>]`.
    pub url: String,
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub max_retries: u32,
    pub timeout_secs: u64,
    /// Environment variable holding the bearer token, if any.
    pub auth_env: Option<String>,
    /// Level reported when no attempt yields a parseable answer.
    pub fallback: Level,
    /// Upper bound on in-flight requests for batch classification.
    pub parallelism: usize,
    pub mode: WireMode,
}

impl Default for LlmEndpoint {
    fn default() -> Self {
        Self {
            url: "mock:".to_string(),
            model: "default".to_string(),
            temperature: 0.8,
            top_p: 0.9,
            max_tokens: 8,
            max_retries: 2,
            timeout_secs: 120,
            auth_env: None,
            fallback: Level::Low,
            parallelism: 4,
            mode: WireMode::Chat,
        }
    }
}

impl LlmEndpoint {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            ..Self::default()
        }
    }

    pub fn mock() -> Self {
        Self::default()
    }

    pub fn is_mock(&self) -> bool {
        self.url.starts_with("mock:")
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::Config(format!("temperature {} < 0", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(LlmError::Config(format!("top_p {} outside (0, 1]", self.top_p)));
        }
        if self.parallelism == 0 {
            return Err(LlmError::Config("parallelism must be at least 1".into()));
        }
        if !self.is_mock() && !(self.url.starts_with("http://") || self.url.starts_with("https://")) {
            return Err(LlmError::Config(format!(
                "endpoint `{}` is neither http(s):// nor mock:",
                self.url
            )));
        }
        Ok(())
    }

    pub fn sampling(&self) -> SamplingParams {
        SamplingParams {
            model: self.model.clone(),
            temperature: self.temperature,
            top_p: self.top_p,
            max_tokens: self.max_tokens,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

/// Anything that turns a prompt into generated text.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, prompt: &Prompt, params: &SamplingParams) -> Result<String, LlmError>;
}

/// OpenAI-compatible HTTP client.
pub struct HttpBackend {
    base: String,
    mode: WireMode,
    auth_env: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(endpoint: &LlmEndpoint) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(endpoint.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base: endpoint.url.trim_end_matches('/').to_string(),
            mode: endpoint.mode,
            auth_env: endpoint.auth_env.clone(),
            agent,
        }
    }

    /// JSON request body for `prompt`.
    pub fn request_body(mode: WireMode, prompt: &Prompt, params: &SamplingParams) -> Value {
        match mode {
            WireMode::Chat => json!({
                "model": params.model,
                "messages": [
                    {"role": "system", "content": prompt.system},
                    {"role": "user", "content": prompt.user},
                ],
                "temperature": params.temperature,
                "top_p": params.top_p,
                "max_tokens": params.max_tokens,
            }),
            WireMode::Raw => json!({
                "model": params.model,
                "prompt": prompt.to_raw(),
                "temperature": params.temperature,
                "top_p": params.top_p,
                "max_tokens": params.max_tokens,
            }),
        }
    }

    /// Extracts the generated text from a completion response.
    pub fn response_text(mode: WireMode, body: &Value) -> Result<String, LlmError> {
        let choice = &body["choices"][0];
        let text = match mode {
            WireMode::Chat => choice["message"]["content"].as_str(),
            WireMode::Raw => choice["text"].as_str(),
        };
        text.map(str::to_string)
            .ok_or_else(|| LlmError::Transport(format!("response has no completion text: {body}")))
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, prompt: &Prompt, params: &SamplingParams) -> Result<String, LlmError> {
        let path = match self.mode {
            WireMode::Chat => "/v1/chat/completions",
            WireMode::Raw => "/v1/completions",
        };
        let url = format!("{}{}", self.base, path);
        let mut req = self.agent.post(&url);
        if let Some(var) = &self.auth_env {
            let token = std::env::var(var).map_err(|_| {
                LlmError::Config(format!("environment variable {var} is not set"))
            })?;
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let body = Self::request_body(self.mode, prompt, params);
        let mut resp = req
            .send_json(&body)
            .map_err(|e| LlmError::Transport(format!("{url}: {e}")))?;
        let status = resp.status();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| LlmError::Transport(format!("{url}: {e}")))?;
        if !status.is_success() {
            return Err(LlmError::Transport(format!("{url}: HTTP {status}: {text}")));
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| LlmError::Transport(format!("{url}: invalid JSON: {e}")))?;
        Self::response_text(self.mode, &value)
    }
}

/// Result of classifying one prompt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelPrediction {
    pub level: Level,
    pub raw_response: String,
    pub attempts: u32,
    pub parse_ok: bool,
}

/// A configured endpoint plus its backend.
#[derive(Clone)]
pub struct LlmClient {
    pub endpoint: LlmEndpoint,
    backend: Arc<dyn CompletionBackend>,
    mock: Option<Arc<MockBackend>>,
}

impl std::fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmClient").field("endpoint", &self.endpoint).finish()
    }
}

impl LlmClient {
    /// Builds the backend named by `endpoint.url`.
    pub fn connect(endpoint: LlmEndpoint) -> Result<Self, LlmError> {
        endpoint.validate()?;
        if let Some(rest) = endpoint.url.strip_prefix("mock:") {
            let mock = Arc::new(MockBackend::new(MockMarkers::parse(rest)?));
            return Ok(Self {
                endpoint,
                backend: mock.clone(),
                mock: Some(mock),
            });
        }
        let backend = Arc::new(HttpBackend::new(&endpoint));
        Ok(Self {
            endpoint,
            backend,
            mock: None,
        })
    }

    /// Uses a caller-supplied backend (scripted test doubles, other transports).
    pub fn with_backend(endpoint: LlmEndpoint, backend: Arc<dyn CompletionBackend>) -> Result<Self, LlmError> {
        endpoint.validate()?;
        Ok(Self {
            endpoint,
            backend,
            mock: None,
        })
    }

    /// Requests served so far, when the backend is the built-in mock.
    pub fn mock_requests(&self) -> Option<usize> {
        self.mock.as_ref().map(|m| m.requests())
    }

    pub fn complete(&self, prompt: &Prompt, max_tokens: Option<u32>) -> Result<String, LlmError> {
        let mut params = self.endpoint.sampling();
        if let Some(m) = max_tokens {
            params.max_tokens = m;
        }
        self.backend.complete(prompt, &params)
    }

    /// Sends `prompt` until a level parses, retrying up to `max_retries`
    /// times. Transport failures are retried on the same budget and surface
    /// as an error once it is spent; unparseable answers fall back to the
    /// configured level with `parse_ok = false`.
    pub fn classify(&self, prompt: &Prompt) -> Result<LevelPrediction, LlmError> {
        let params = self.endpoint.sampling();
        let max_attempts = self.endpoint.max_retries + 1;
        let mut last_response = String::new();
        let mut last_transport = None;
        for attempt in 1..=max_attempts {
            match self.backend.complete(prompt, &params) {
                Ok(text) => {
                    if let Some(level) = parse_level(&text) {
                        return Ok(LevelPrediction {
                            level,
                            raw_response: text,
                            attempts: attempt,
                            parse_ok: true,
                        });
                    }
                    debug!("attempt {attempt}: unparseable answer {text:?}");
                    last_response = text;
                    last_transport = None;
                }
                Err(LlmError::Transport(msg)) => {
                    debug!("attempt {attempt}: transport error {msg}");
                    last_transport = Some(msg);
                }
                Err(other) => return Err(other),
            }
        }
        if let Some(msg) = last_transport {
            return Err(LlmError::Transport(msg));
        }
        warn!(
            "no parseable level after {max_attempts} attempts; falling back to {}",
            self.endpoint.fallback
        );
        Ok(LevelPrediction {
            level: self.endpoint.fallback,
            raw_response: last_response,
            attempts: max_attempts,
            parse_ok: false,
        })
    }
}
