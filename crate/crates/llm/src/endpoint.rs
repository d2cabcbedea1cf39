use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

/// Connection and decoding settings for a chat-completion endpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    /// Base URL up to and excluding `/chat/completions`, e.g. `http://localhost:8000/v1`.
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: f64,
    pub max_in_flight: usize,
    /// Retries after the first attempt of a request.
    pub max_retries: u32,
    /// Upper bound on HTTP requests, retries included.
    pub max_requests: Option<usize>,
    /// Environment variable holding the bearer token, if the endpoint needs one.
    pub api_key_env: Option<String>,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://localhost:8000/v1".into(),
            model: "meta-llama/Llama-3.1-8B-Instruct".into(),
            temperature: 0.0,
            max_tokens: 64,
            timeout_secs: 60.0,
            max_in_flight: 4,
            max_retries: 2,
            max_requests: None,
            api_key_env: None,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err("timeout_secs must be positive".into());
        }
        if self.max_in_flight == 0 {
            return Err("max_in_flight must be at least 1".into());
        }
        if self.base_url.trim().is_empty() {
            return Err("base_url is empty".into());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err("temperature must be within [0, 2]".into());
        }
        Ok(())
    }

    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// Why a single request failed.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum RequestError {
    #[error("could not connect: {0}")]
    Unreachable(String),
    #[error("request timed out")]
    Timeout,
    #[error("authentication rejected (HTTP {0})")]
    Auth(u16),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("unexpected response: {0}")]
    BadResponse(String),
}

impl RequestError {
    pub fn is_retryable(&self) -> bool {
        match self {
            RequestError::Unreachable(_) | RequestError::Timeout | RequestError::BadResponse(_) => {
                true
            }
            RequestError::Http { status, .. } => *status == 429 || *status >= 500,
            RequestError::Auth(_) => false,
        }
    }
}

/// Something that turns a prompt into completion text.
pub trait ChatClient: Sync {
    fn complete(&self, prompt: &str) -> Result<String, RequestError>;
}

impl<F> ChatClient for F
where
    F: Fn(&str) -> Result<String, RequestError> + Sync,
{
    fn complete(&self, prompt: &str) -> Result<String, RequestError> {
        self(prompt)
    }
}

/// Blocking client for the OpenAI-style `/chat/completions` route.
pub struct HttpChatClient {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    temperature: f64,
    max_tokens: u32,
    api_key: Option<String>,
}

impl std::fmt::Debug for HttpChatClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpChatClient")
            .field("url", &self.url)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid endpoint configuration: {0}")]
    Config(String),
    #[error("environment variable {0} is not set")]
    MissingCredential(String),
    #[error("could not build HTTP client: {0}")]
    Build(String),
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

impl HttpChatClient {
    /// Reads the credential from the configured environment variable, if any.
    pub fn from_config(config: &EndpointConfig) -> Result<Self, ClientError> {
        let api_key = match &config.api_key_env {
            Some(var) => {
                Some(std::env::var(var).map_err(|_| ClientError::MissingCredential(var.clone()))?)
            }
            None => None,
        };
        Self::with_key(config, api_key)
    }

    pub fn with_key(config: &EndpointConfig, api_key: Option<String>) -> Result<Self, ClientError> {
        config.validate().map_err(ClientError::Config)?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| ClientError::Build(e.to_string()))?;
        Ok(HttpChatClient {
            client,
            url: config.completions_url(),
            model: config.model.clone(),
            temperature: config.temperature,
            max_tokens: config.max_tokens,
            api_key,
        })
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, prompt: &str) -> Result<String, RequestError> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        });
        let mut request = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                RequestError::Timeout
            } else {
                RequestError::Unreachable(e.without_url().to_string())
            }
        })?;
        let status = response.status().as_u16();
        if status == 401 || status == 403 {
            return Err(RequestError::Auth(status));
        }
        let text = response.text().map_err(|e| {
            if e.is_timeout() {
                RequestError::Timeout
            } else {
                RequestError::BadResponse(e.without_url().to_string())
            }
        })?;
        if !(200..300).contains(&status) {
            let body: String = text.chars().take(200).collect();
            return Err(RequestError::Http { status, body });
        }
        let parsed: CompletionResponse =
            serde_json::from_str(&text).map_err(|e| RequestError::BadResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| RequestError::BadResponse("no choices in response".into()))
    }
}
