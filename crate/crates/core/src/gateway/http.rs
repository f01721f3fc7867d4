use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendKind, CallError, GenerationRequest};
use crate::prompts::ChatTurn;

/// Environment variable holding the bearer token. Never read from config files.
pub const API_KEY_ENV: &str = "ECTA_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpConfig {
    /// Full chat-completions endpoint URL.
    pub base_url: String,
    pub timeout: Duration,
    pub api_key: Option<String>,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Self {
        HttpConfig {
            base_url: base_url.into(),
            timeout,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatTurn],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

/// Extracts `choices[0].message.content` from a chat-completions response body.
pub(crate) fn parse_completion(body: &str) -> Result<String, CallError> {
    let parsed: WireResponse = serde_json::from_str(body).map_err(|e| CallError::Malformed(e.to_string()))?;
    parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| CallError::Malformed("response has no choices[0].message.content".into()))
}

pub struct HttpBackend {
    agent: ureq::Agent,
    config: HttpConfig,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend { agent, config }
    }
}

impl Backend for HttpBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Http
    }

    fn call(&self, request: &GenerationRequest) -> Result<String, CallError> {
        let body = WireRequest {
            model: &request.model_id,
            messages: &request.turns,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let mut req = self.agent.post(&self.config.base_url).header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(map_transport)?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(CallError::Status(status));
        }
        let text = resp.body_mut().read_to_string().map_err(map_transport)?;
        parse_completion(&text)
    }
}

fn map_transport(e: ureq::Error) -> CallError {
    match e {
        ureq::Error::Timeout(_) => CallError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => CallError::Timeout,
        ureq::Error::StatusCode(code) => CallError::Status(code),
        other => CallError::Transport(other.to_string()),
    }
}
