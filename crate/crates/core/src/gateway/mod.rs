//! Uniform text-generation interface over an HTTP chat-completions backend and
//! an offline mock, with retries and bounded batch parallelism.

mod http;
mod mock;

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::prompts::{ChatTurn, Role};

pub use http::{HttpBackend, HttpConfig, API_KEY_ENV};
pub use mock::{load_mock_table, request_digest, write_mock_table, MockBackend, MockEntry};

pub const DEFAULT_EXTRACTION_TEMPERATURE: f64 = 0.0;
pub const DEFAULT_AUGMENTATION_TEMPERATURE: f64 = 0.8;
pub const MAX_TEMPERATURE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub turns: Vec<ChatTurn>,
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub request_tag: String,
}

impl GenerationRequest {
    pub fn new(
        turns: Vec<ChatTurn>,
        model_id: impl Into<String>,
        temperature: f64,
        max_tokens: u32,
        request_tag: impl Into<String>,
    ) -> Result<Self, GatewayError> {
        if turns.is_empty() {
            return Err(GatewayError::InvalidRequest("no turns".into()));
        }
        if !(0.0..=MAX_TEMPERATURE).contains(&temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {temperature} outside [0, {MAX_TEMPERATURE}]"
            )));
        }
        if max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(GenerationRequest {
            turns,
            model_id: model_id.into(),
            temperature,
            max_tokens,
            request_tag: request_tag.into(),
        })
    }

    pub fn last_user_content(&self) -> Option<&str> {
        self.turns
            .iter()
            .rev()
            .find(|t| t.role == Role::User)
            .map(|t| t.content.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Mock,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Http => "http",
            BackendKind::Mock => "mock",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    pub backend: BackendKind,
    pub latency_ms: u64,
    pub attempts: u32,
}

/// A single backend call outcome, before retry handling.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CallError {
    #[error("timed out")]
    Timeout,
    #[error("http status {0}")]
    Status(u16),
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("no mock entry for digest {0}")]
    MockMiss(String),
    #[error("transport error: {0}")]
    Transport(String),
}

impl CallError {
    /// Timeouts, 429, 5xx and connection-level failures are transient.
    pub fn is_retryable(&self) -> bool {
        match self {
            CallError::Timeout | CallError::Transport(_) => true,
            CallError::Status(code) => *code == 429 || (500..600).contains(code),
            CallError::Malformed(_) | CallError::MockMiss(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("backend returned http status {code} after {attempts} attempt(s)")]
    HttpStatus { code: u16, attempts: u32 },
    #[error("malformed backend response: {0}")]
    MalformedBackendResponse(String),
    #[error("mock table has no entry for digest {digest}")]
    MockMiss { digest: String },
    #[error("transport failure after {attempts} attempt(s): {detail}")]
    Transport { detail: String, attempts: u32 },
}

impl GatewayError {
    fn from_call(err: CallError, attempts: u32) -> Self {
        match err {
            CallError::Timeout => GatewayError::Timeout { attempts },
            CallError::Status(code) => GatewayError::HttpStatus { code, attempts },
            CallError::Malformed(m) => GatewayError::MalformedBackendResponse(m),
            CallError::MockMiss(digest) => GatewayError::MockMiss { digest },
            CallError::Transport(detail) => GatewayError::Transport { detail, attempts },
        }
    }
}

/// Something that turns a request into completion text. Implementations must
/// tolerate concurrent calls.
pub trait Backend: Send + Sync {
    fn kind(&self) -> BackendKind;
    fn call(&self, request: &GenerationRequest) -> Result<String, CallError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub factor: f64,
    /// Relative jitter, e.g. 0.2 for ±20%.
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            factor: 2.0,
            jitter: 0.2,
        }
    }
}

impl RetryPolicy {
    /// Retries immediately; for tests and offline runs.
    pub fn immediate(max_retries: u32) -> Self {
        RetryPolicy {
            max_retries,
            base_delay: Duration::ZERO,
            factor: 1.0,
            jitter: 0.0,
        }
    }

    /// Delay before retry number `retry` (0-based), given a jitter sample in [-1, 1].
    pub fn delay(&self, retry: u32, unit_jitter: f64) -> Duration {
        let nominal = self.base_delay.as_secs_f64() * self.factor.powi(retry as i32);
        let scaled = nominal * (1.0 + self.jitter * unit_jitter.clamp(-1.0, 1.0));
        Duration::from_secs_f64(scaled.max(0.0))
    }
}

type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

pub struct Gateway {
    backend: Arc<dyn Backend>,
    retry: RetryPolicy,
    rng: Mutex<ChaCha8Rng>,
    sleeper: Sleeper,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.kind())
            .field("retry", &self.retry)
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>, retry: RetryPolicy) -> Self {
        Gateway {
            backend,
            retry,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(0x5eed)),
            sleeper: Arc::new(std::thread::sleep),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng = Mutex::new(ChaCha8Rng::seed_from_u64(seed));
        self
    }

    /// Replaces the sleep used between retries.
    pub fn with_sleeper(mut self, sleeper: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleeper = Arc::new(sleeper);
        self
    }

    pub fn backend_kind(&self) -> BackendKind {
        self.backend.kind()
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        self.retry
    }

    pub fn complete(&self, request: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        let started = Instant::now();
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            match self.backend.call(request) {
                Ok(text) => {
                    return Ok(GenerationResult {
                        text,
                        backend: self.backend.kind(),
                        latency_ms: started.elapsed().as_millis() as u64,
                        attempts,
                    })
                }
                Err(e) if e.is_retryable() && attempts <= self.retry.max_retries => {
                    let unit = self.rng.lock().expect("rng lock").random_range(-1.0..=1.0);
                    let wait = self.retry.delay(attempts - 1, unit);
                    log::debug!(
                        "[{}] attempt {attempts} failed ({e}); retrying in {wait:?}",
                        request.request_tag
                    );
                    (self.sleeper)(wait);
                }
                Err(e) => return Err(GatewayError::from_call(e, attempts)),
            }
        }
    }

    /// Runs `requests` with at most `parallelism` in flight. Results keep input
    /// order; failures stay positional.
    pub fn complete_batch(
        &self,
        requests: &[GenerationRequest],
        parallelism: usize,
    ) -> Vec<Result<GenerationResult, GatewayError>> {
        let workers = parallelism.max(1).min(requests.len());
        if workers <= 1 {
            return requests.iter().map(|r| self.complete(r)).collect();
        }
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<GenerationResult, GatewayError>>>> =
            requests.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= requests.len() {
                        break;
                    }
                    let result = self.complete(&requests[i]);
                    *slots[i].lock().expect("slot lock") = Some(result);
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.into_inner().expect("slot lock").expect("every slot filled"))
            .collect()
    }
}
