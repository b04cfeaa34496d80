//! LLM client contract and backends.
//!
//! Every backend answers [`LlmRequest`]s with [`LlmResponse`]s. Replay and
//! record backends key transcripts by [`request_hash`], a SHA-256 over the
//! canonical (key-sorted, whitespace-free) JSON form of the request, so the
//! transcript directory is content addressed and mergeable.

mod live;
mod replay;
mod scripted;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use live::{HttpTransport, LiveClient, ReqwestTransport, TransportError, DEFAULT_ENDPOINT};
pub use replay::{RecordingClient, ReplayClient, TranscriptEntry};
pub use scripted::ScriptedClient;

pub const API_KEY_ENV: &str = "METARAG_API_KEY";
pub const ENDPOINT_ENV: &str = "METARAG_ENDPOINT";

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("LLM unavailable: {0}")]
    Unavailable(String),
    #[error("no recorded transcript for request {hash}")]
    TranscriptMiss { hash: String },
    #[error("transcript error: {0}")]
    Transcript(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub system: String,
    pub user: String,
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl LlmRequest {
    pub fn new(model: impl Into<String>, system: impl Into<String>, user: impl Into<String>) -> Self {
        LlmRequest {
            system: system.into(),
            user: user.into(),
            model: model.into(),
            temperature: 0.0,
            max_output_tokens: 4096,
        }
    }

    /// The text that occupies the context window.
    pub fn prompt_text(&self) -> String {
        format!("{}\n\n{}", self.system, self.user)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
}

pub trait LlmClient: Send + Sync {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError>;
}

impl<T: LlmClient + ?Sized> LlmClient for &T {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        (**self).complete(request)
    }
}

impl<T: LlmClient + ?Sized> LlmClient for Box<T> {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        (**self).complete(request)
    }
}

impl<T: LlmClient + ?Sized> LlmClient for Arc<T> {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        (**self).complete(request)
    }
}

/// Recursively key-sorted, compact JSON.
pub fn canonical_json(value: &serde_json::Value) -> String {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            let mut keys: Vec<_> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .into_iter()
                .map(|k| {
                    format!(
                        "{}:{}",
                        serde_json::to_string(k).expect("string key"),
                        canonical_json(&map[k])
                    )
                })
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => {
            let body: Vec<String> = items.iter().map(canonical_json).collect();
            format!("[{}]", body.join(","))
        }
        other => other.to_string(),
    }
}

pub fn hash_json(value: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(canonical_json(value).as_bytes()))
}

pub fn request_hash(request: &LlmRequest) -> String {
    hash_json(&serde_json::to_value(request).expect("request serializes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_field_order() {
        let a = r#"{"system":"s","user":"u","model":"m","temperature":0.0,"max_output_tokens":10}"#;
        let b = r#"{"max_output_tokens":10,"model":"m","temperature":0.0,"user":"u","system":"s"}"#;
        let ra: LlmRequest = serde_json::from_str(a).unwrap();
        let rb: LlmRequest = serde_json::from_str(b).unwrap();
        assert_eq!(request_hash(&ra), request_hash(&rb));
        let va: serde_json::Value = serde_json::from_str(a).unwrap();
        let vb: serde_json::Value = serde_json::from_str(b).unwrap();
        assert_eq!(hash_json(&va), hash_json(&vb));
    }

    #[test]
    fn hash_depends_on_content() {
        let a = LlmRequest::new("m", "s", "u");
        let mut b = a.clone();
        b.user.push('!');
        assert_ne!(request_hash(&a), request_hash(&b));
        assert_eq!(request_hash(&a).len(), 64);
    }

    #[test]
    fn canonical_nested() {
        let v: serde_json::Value = serde_json::from_str(r#"{"b":[{"z":1,"a":2}],"a":"x"}"#).unwrap();
        assert_eq!(canonical_json(&v), r#"{"a":"x","b":[{"a":2,"z":1}]}"#);
    }
}
