//! Chat-completion HTTP backend.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{LlmClient, LlmError, LlmRequest, LlmResponse, API_KEY_ENV, ENDPOINT_ENV};
use crate::tokens::{ApproxBpeCounter, TokenCounter};

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
const MAX_ATTEMPTS: u32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
}

impl TransportError {
    fn is_transient(&self) -> bool {
        match self {
            TransportError::Connect(_) => true,
            TransportError::Status { status, .. } => *status == 429 || *status >= 500,
        }
    }
}

/// Minimal POST-JSON seam so retries and parsing are testable offline.
pub trait HttpTransport: Send + Sync {
    fn post_json(&self, url: &str, bearer: &str, body: &Value) -> Result<Value, TransportError>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LlmError::Unavailable(e.to_string()))?;
        Ok(ReqwestTransport { client })
    }
}

impl HttpTransport for ReqwestTransport {
    fn post_json(&self, url: &str, bearer: &str, body: &Value) -> Result<Value, TransportError> {
        let response = self
            .client
            .post(url)
            .bearer_auth(bearer)
            .json(body)
            .send()
            .map_err(|e| TransportError::Connect(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .text()
            .map_err(|e| TransportError::Connect(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(TransportError::Status { status, body: text });
        }
        serde_json::from_str(&text).map_err(|e| TransportError::Status {
            status,
            body: format!("invalid JSON: {e}"),
        })
    }
}

/// Counting semaphore bounding in-flight requests.
struct Limiter {
    free: Mutex<usize>,
    available: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(max: usize) -> Self {
        Limiter {
            free: Mutex::new(max.max(1)),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("limiter lock");
        while *free == 0 {
            free = self.available.wait(free).expect("limiter lock");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("limiter lock") += 1;
        self.0.available.notify_one();
    }
}

pub struct LiveClient<T = ReqwestTransport> {
    endpoint: String,
    api_key: String,
    transport: T,
    limiter: Limiter,
    backoff: Duration,
    counter: Box<dyn TokenCounter>,
}

impl LiveClient<ReqwestTransport> {
    /// Credential from `METARAG_API_KEY`, endpoint from `METARAG_ENDPOINT`
    /// when set.
    pub fn from_env(max_in_flight: usize) -> Result<Self, LlmError> {
        let api_key = std::env::var(API_KEY_ENV)
            .map_err(|_| LlmError::Unavailable(format!("{API_KEY_ENV} is not set")))?;
        let endpoint = std::env::var(ENDPOINT_ENV).unwrap_or_else(|_| DEFAULT_ENDPOINT.to_string());
        Ok(LiveClient::new(
            endpoint,
            api_key,
            ReqwestTransport::new(Duration::from_secs(300))?,
            max_in_flight,
        ))
    }
}

impl<T: HttpTransport> LiveClient<T> {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>, transport: T, max_in_flight: usize) -> Self {
        LiveClient {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            transport,
            limiter: Limiter::new(max_in_flight),
            backoff: Duration::from_millis(500),
            counter: Box::new(ApproxBpeCounter),
        }
    }

    pub fn with_endpoint(mut self, endpoint: impl Into<String>) -> Self {
        self.endpoint = endpoint.into();
        self
    }

    /// Base delay of the exponential backoff (doubled per retry).
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn body(request: &LlmRequest) -> Value {
        json!({
            "model": request.model,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
        })
    }

    fn parse(&self, request: &LlmRequest, value: &Value, latency_ms: u64) -> Result<LlmResponse, LlmError> {
        let text = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| LlmError::Unavailable("response has no message content".into()))?
            .to_string();
        let usage = |key: &str| value.pointer(&format!("/usage/{key}")).and_then(Value::as_u64);
        Ok(LlmResponse {
            prompt_tokens: usage("prompt_tokens")
                .unwrap_or_else(|| self.counter.count(&request.prompt_text()) as u64),
            completion_tokens: usage("completion_tokens")
                .unwrap_or_else(|| self.counter.count(&text) as u64),
            latency_ms,
            text,
        })
    }
}

impl<T: HttpTransport> LlmClient for LiveClient<T> {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let _permit = self.limiter.acquire();
        let body = Self::body(request);
        let mut last = None;
        for attempt in 0..MAX_ATTEMPTS {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            let started = Instant::now();
            match self.transport.post_json(&self.endpoint, &self.api_key, &body) {
                Ok(value) => {
                    return self.parse(request, &value, started.elapsed().as_millis() as u64);
                }
                Err(err) if err.is_transient() => {
                    log::warn!("LLM call attempt {} failed: {err}", attempt + 1);
                    last = Some(err);
                }
                Err(err) => return Err(LlmError::Unavailable(err.to_string())),
            }
        }
        Err(LlmError::Unavailable(format!(
            "gave up after {MAX_ATTEMPTS} attempts: {}",
            last.map(|e| e.to_string()).unwrap_or_default()
        )))
    }
}
