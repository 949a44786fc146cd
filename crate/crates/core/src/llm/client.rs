use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{LlmError, ResponseCache};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    /// Chat-completion URL, e.g. `https://host/v1/chat/completions`.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token; `None` sends no
    /// `Authorization` header.
    pub token_env: Option<String>,
    pub max_retries: u32,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub temperature: f64,
    /// Base delay of the exponential backoff between attempts.
    pub backoff_ms: u64,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            endpoint: "http://127.0.0.1:8080/v1/chat/completions".to_string(),
            model: "gpt-3.5-turbo".to_string(),
            token_env: Some("OPENAI_API_KEY".to_string()),
            max_retries: 3,
            timeout_secs: 120,
            max_in_flight: 4,
            temperature: 0.0,
            backoff_ms: 500,
        }
    }
}

impl ClientConfig {
    pub fn check(&self) -> Result<(), LlmError> {
        if self.max_in_flight == 0 {
            return Err(LlmError::Config("max_in_flight must be at least 1".into()));
        }
        if self.model.is_empty() {
            return Err(LlmError::Config("model must not be empty".into()));
        }
        Ok(())
    }
}

/// JSON request body: model, a single user message, temperature.
pub fn request_body(config: &ClientConfig, prompt: &str) -> Value {
    json!({
        "model": config.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": config.temperature,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendError {
    /// Connection-level failure; retried.
    Transport(String),
    /// Non-success HTTP status; retried for 429 and 5xx.
    Status { code: u16, body: String },
    /// Success status but unusable payload; not retried.
    InvalidResponse(String),
}

impl BackendError {
    fn transient(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Status { code, .. } => *code == 429 || *code >= 500,
            BackendError::InvalidResponse(_) => false,
        }
    }
}

/// Something that turns a request body into model text.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, body: &Value) -> Result<String, BackendError>;
}

impl<F> ChatBackend for F
where
    F: Fn(&Value) -> Result<String, BackendError> + Send + Sync,
{
    fn complete(&self, body: &Value) -> Result<String, BackendError> {
        self(body)
    }
}

/// Blocking HTTP backend for OpenAI-style chat-completion endpoints.
pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    token: Option<String>,
}

impl HttpBackend {
    pub fn new(config: &ClientConfig) -> Result<Self, LlmError> {
        let token = match &config.token_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| LlmError::MissingToken(var.clone()))?,
            ),
            None => None,
        };
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build();
        Ok(HttpBackend {
            agent,
            endpoint: config.endpoint.clone(),
            token,
        })
    }
}

fn excerpt(text: &str) -> String {
    const LIMIT: usize = 200;
    match text.char_indices().nth(LIMIT) {
        Some((at, _)) => format!("{}...", &text[..at]),
        None => text.to_string(),
    }
}

/// Pulls the assistant text out of a chat-completion payload.
fn message_text(payload: &Value) -> Option<String> {
    payload
        .pointer("/choices/0/message/content")
        .or_else(|| payload.pointer("/message/content"))
        .and_then(Value::as_str)
        .map(str::to_owned)
}

impl ChatBackend for HttpBackend {
    fn complete(&self, body: &Value) -> Result<String, BackendError> {
        let mut request = self.agent.post(&self.endpoint);
        if let Some(token) = &self.token {
            request = request.set("Authorization", &format!("Bearer {token}"));
        }
        match request.send_json(body) {
            Ok(response) => {
                let payload: Value = response
                    .into_json()
                    .map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
                message_text(&payload).ok_or_else(|| {
                    BackendError::InvalidResponse(excerpt(&payload.to_string()))
                })
            }
            Err(ureq::Error::Status(code, response)) => Err(BackendError::Status {
                code,
                body: excerpt(&response.into_string().unwrap_or_default()),
            }),
            Err(ureq::Error::Transport(t)) => Err(BackendError::Transport(t.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub text: String,
    pub cached: bool,
    /// Failed attempts before the successful one.
    pub retries: u32,
    pub latency_ms: u64,
}

/// Chat client with a mandatory response cache and retry policy.
pub struct LlmClient {
    config: ClientConfig,
    backend: Box<dyn ChatBackend>,
    cache: ResponseCache,
}

impl LlmClient {
    pub fn new(
        config: ClientConfig,
        backend: Box<dyn ChatBackend>,
        cache: ResponseCache,
    ) -> Result<Self, LlmError> {
        config.check()?;
        Ok(LlmClient {
            config,
            backend,
            cache,
        })
    }

    /// Client over [`HttpBackend`].
    pub fn http(config: ClientConfig, cache: ResponseCache) -> Result<Self, LlmError> {
        let backend = HttpBackend::new(&config)?;
        Self::new(config, Box::new(backend), cache)
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    pub fn query(&self, prompt: &str) -> Result<QueryOutcome, LlmError> {
        let started = Instant::now();
        if let Some(text) = self.cache.get(&self.config.model, prompt)? {
            return Ok(QueryOutcome {
                text,
                cached: true,
                retries: 0,
                latency_ms: started.elapsed().as_millis() as u64,
            });
        }
        let body = request_body(&self.config, prompt);
        let mut attempt = 0u32;
        loop {
            match self.backend.complete(&body) {
                Ok(text) => {
                    self.cache.put(&self.config.model, prompt, &text)?;
                    return Ok(QueryOutcome {
                        text,
                        cached: false,
                        retries: attempt,
                        latency_ms: started.elapsed().as_millis() as u64,
                    });
                }
                Err(err) if err.transient() && attempt < self.config.max_retries => {
                    let delay = self.config.backoff_ms.saturating_mul(1u64 << attempt.min(16));
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                Err(BackendError::Transport(message)) => {
                    return Err(LlmError::Transport {
                        attempts: attempt + 1,
                        message,
                    })
                }
                Err(BackendError::Status { code, body }) => {
                    return Err(LlmError::Status { code, body })
                }
                Err(BackendError::InvalidResponse(msg)) => {
                    return Err(LlmError::InvalidResponse(msg))
                }
            }
        }
    }
}

/// Free-function form of [`LlmClient::query`].
pub fn query(client: &LlmClient, prompt: &str) -> Result<QueryOutcome, LlmError> {
    client.query(prompt)
}
