use std::sync::Mutex;

use super::{LlmClient, LlmError, LlmRequest, LlmResponse};
use crate::tokens::{TokenCounter, WhitespaceCounter};

type Responder = dyn Fn(&LlmRequest) -> Option<String> + Send + Sync;

/// In-process client answering from a closure. Used to author fixture
/// transcripts (wrapped in a recorder) and in tests. `None` from the
/// responder surfaces as [`LlmError::Unavailable`].
pub struct ScriptedClient {
    responder: Box<Responder>,
    calls: Mutex<Vec<LlmRequest>>,
    counter: Box<dyn TokenCounter>,
}

impl ScriptedClient {
    pub fn new(responder: impl Fn(&LlmRequest) -> Option<String> + Send + Sync + 'static) -> Self {
        ScriptedClient {
            responder: Box::new(responder),
            calls: Mutex::new(Vec::new()),
            counter: Box::new(WhitespaceCounter),
        }
    }

    pub fn with_counter(mut self, counter: Box<dyn TokenCounter>) -> Self {
        self.counter = counter;
        self
    }

    pub fn calls(&self) -> Vec<LlmRequest> {
        self.calls.lock().expect("calls lock").clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().expect("calls lock").len()
    }
}

impl LlmClient for ScriptedClient {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        self.calls.lock().expect("calls lock").push(request.clone());
        let text = (self.responder)(request)
            .ok_or_else(|| LlmError::Unavailable("scripted client has no answer".into()))?;
        Ok(LlmResponse {
            prompt_tokens: self.counter.count(&request.prompt_text()) as u64,
            completion_tokens: self.counter.count(&text) as u64,
            latency_ms: 0,
            text,
        })
    }
}
