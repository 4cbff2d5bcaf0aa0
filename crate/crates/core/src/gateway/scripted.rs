//! In-process backends for tests and offline fixtures.

use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse, Purpose};

/// Rough token count, four characters per token.
pub fn approx_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

fn response_for(req: &ChatRequest, text: String) -> ChatResponse {
    let prompt: usize = req.messages.iter().map(|m| m.content.chars().count()).sum();
    ChatResponse {
        prompt_tokens: (prompt as u64).div_ceil(4),
        completion_tokens: approx_tokens(&text),
        text,
        latency_ms: 0,
    }
}

/// Replies popped from per-purpose queues, then from a shared queue.
#[derive(Default)]
pub struct ScriptedBackend {
    by_purpose: Mutex<HashMap<Purpose, VecDeque<Result<String, BackendError>>>>,
    shared: Mutex<VecDeque<Result<String, BackendError>>>,
    calls: Mutex<Vec<ChatRequest>>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, purpose: Purpose, text: impl Into<String>) -> &Self {
        self.by_purpose
            .lock()
            .unwrap()
            .entry(purpose)
            .or_default()
            .push_back(Ok(text.into()));
        self
    }

    pub fn push_error(&self, purpose: Purpose, err: BackendError) -> &Self {
        self.by_purpose
            .lock()
            .unwrap()
            .entry(purpose)
            .or_default()
            .push_back(Err(err));
        self
    }

    pub fn push_any(&self, text: impl Into<String>) -> &Self {
        self.shared.lock().unwrap().push_back(Ok(text.into()));
        self
    }

    /// Every request received so far, including failed attempts.
    pub fn calls(&self) -> Vec<ChatRequest> {
        self.calls.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().unwrap().len()
    }

    pub fn remaining(&self) -> usize {
        let queued: usize = self
            .by_purpose
            .lock()
            .unwrap()
            .values()
            .map(VecDeque::len)
            .sum();
        queued + self.shared.lock().unwrap().len()
    }
}

impl ChatBackend for ScriptedBackend {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        self.calls.lock().unwrap().push(req.clone());
        let next = self
            .by_purpose
            .lock()
            .unwrap()
            .get_mut(&req.purpose)
            .and_then(VecDeque::pop_front)
            .or_else(|| self.shared.lock().unwrap().pop_front());
        match next {
            Some(Ok(text)) => Ok(response_for(req, text)),
            Some(Err(e)) => Err(e),
            None => Err(BackendError::Fatal(format!(
                "script exhausted for purpose {}",
                req.purpose.as_str()
            ))),
        }
    }
}

/// Backend computing each reply from the request.
pub struct FnBackend<F>(pub F);

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&ChatRequest) -> Result<String, BackendError> + Send + Sync,
{
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (self.0)(req).map(|text| response_for(req, text))
    }
}
