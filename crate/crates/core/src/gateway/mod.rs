//! The single chokepoint for model traffic.
//!
//! Every chat completion and embedding goes through [`Gateway`], which owns
//! retries, cost accounting and the transcript store. In replay mode the
//! gateway answers purely from recorded transcripts, which is what makes the
//! pipeline testable offline.

pub mod embed;
pub mod ledger;
pub mod openai;
pub mod scripted;
pub mod structured;
pub mod transcript;

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use embed::{cosine, HashEmbedder};
pub use ledger::{CostLedger, CostReport, Price};
pub use structured::{extract_structured, ParseFailure, Structured, StructuredKind};
pub use transcript::{StoreError, TranscriptEntry, TranscriptStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    GuideExtract,
    Ground,
    Standardize,
    Filter,
    Skeleton,
    Fill,
    Verify,
    Plan,
    Refine,
    Match,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSlot {
    Analysis,
    Coding,
}

impl Purpose {
    pub const ALL: [Purpose; 10] = [
        Purpose::GuideExtract,
        Purpose::Ground,
        Purpose::Standardize,
        Purpose::Filter,
        Purpose::Skeleton,
        Purpose::Fill,
        Purpose::Verify,
        Purpose::Plan,
        Purpose::Refine,
        Purpose::Match,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Purpose::GuideExtract => "guide_extract",
            Purpose::Ground => "ground",
            Purpose::Standardize => "standardize",
            Purpose::Filter => "filter",
            Purpose::Skeleton => "skeleton",
            Purpose::Fill => "fill",
            Purpose::Verify => "verify",
            Purpose::Plan => "plan",
            Purpose::Refine => "refine",
            Purpose::Match => "match",
        }
    }

    /// Signal design and judging go to the analysis model, writing code to
    /// the coding model.
    pub fn slot(&self) -> ModelSlot {
        match self {
            Purpose::Skeleton | Purpose::Fill | Purpose::Plan | Purpose::Refine => {
                ModelSlot::Coding
            }
            _ => ModelSlot::Analysis,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub purpose: Purpose,
}

impl ChatRequest {
    pub fn new(purpose: Purpose, model: impl Into<String>) -> Self {
        Self {
            messages: Vec::new(),
            model: model.into(),
            temperature: 0.0,
            max_output_tokens: 4096,
            purpose,
        }
    }

    pub fn system(mut self, content: impl Into<String>) -> Self {
        self.messages.push(Message {
            role: Role::System,
            content: content.into(),
        });
        self
    }

    pub fn user(mut self, content: impl Into<String>) -> Self {
        self.messages.push(Message {
            role: Role::User,
            content: content.into(),
        });
        self
    }

    pub fn assistant(mut self, content: impl Into<String>) -> Self {
        self.messages.push(Message {
            role: Role::Assistant,
            content: content.into(),
        });
        self
    }

    /// Text of the last user message.
    pub fn last_user(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map_or("", |m| m.content.as_str())
    }

    fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("no messages".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transient: {0}")]
    Transient(String),
    #[error("{0}")]
    Fatal(String),
}

pub trait ChatBackend: Send + Sync {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError>;
}

pub trait EmbedBackend: Send + Sync {
    fn model(&self) -> &str;
    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError>;
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend error: {0}")]
    Backend(String),
    #[error("no chat backend configured")]
    NoBackend,
    #[error("replay miss for {purpose} request {key}")]
    ReplayMiss { key: String, purpose: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl GatewayError {
    pub fn is_replay_miss(&self) -> bool {
        matches!(self, GatewayError::ReplayMiss { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Live,
    Record,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// retries after the first attempt
    pub retry_limit: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl RetryPolicy {
    pub fn no_delay(retry_limit: u32) -> Self {
        Self {
            retry_limit,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retry_limit: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(20),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelRouting {
    pub analysis_model: String,
    pub coding_model: String,
    pub embed_model: String,
}

impl Default for ModelRouting {
    fn default() -> Self {
        Self {
            analysis_model: "analysis-model".into(),
            coding_model: "coding-model".into(),
            embed_model: "hash-256".into(),
        }
    }
}

impl ModelRouting {
    pub fn model_for(&self, purpose: Purpose) -> &str {
        match purpose.slot() {
            ModelSlot::Analysis => &self.analysis_model,
            ModelSlot::Coding => &self.coding_model,
        }
    }
}

/// Successful parse of a model reply, with the number of re-prompts it took.
#[derive(Debug, Clone)]
pub struct Asked<T> {
    pub value: T,
    pub reprompts: u32,
    pub raw: String,
}

#[derive(Debug, Error)]
pub enum AskError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("reply unusable after {attempts} attempts: {reason}")]
    Unparseable {
        attempts: u32,
        reason: String,
        raw: String,
    },
}

pub struct Gateway {
    mode: Mode,
    chat: Option<Arc<dyn ChatBackend>>,
    embedder: Option<Arc<dyn EmbedBackend>>,
    store: Option<TranscriptStore>,
    retry: RetryPolicy,
    routing: ModelRouting,
    max_parallel: usize,
    max_output_tokens: u32,
    ledger: Mutex<CostLedger>,
    occurrences: Mutex<HashMap<String, u32>>,
    backend_calls: AtomicU64,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("mode", &self.mode)
            .field("routing", &self.routing)
            .field("max_parallel", &self.max_parallel)
            .finish_non_exhaustive()
    }
}

pub struct GatewayBuilder {
    mode: Mode,
    chat: Option<Arc<dyn ChatBackend>>,
    embedder: Option<Arc<dyn EmbedBackend>>,
    store: Option<TranscriptStore>,
    retry: RetryPolicy,
    routing: ModelRouting,
    prices: BTreeMap<String, Price>,
    previous_costs: Option<CostReport>,
    max_parallel: usize,
    max_output_tokens: u32,
}

impl GatewayBuilder {
    pub fn chat(mut self, backend: Arc<dyn ChatBackend>) -> Self {
        self.chat = Some(backend);
        self
    }

    pub fn embedder(mut self, backend: Arc<dyn EmbedBackend>) -> Self {
        self.embedder = Some(backend);
        self
    }

    pub fn store(mut self, store: TranscriptStore) -> Self {
        self.store = Some(store);
        self
    }

    pub fn retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn routing(mut self, routing: ModelRouting) -> Self {
        self.routing = routing;
        self
    }

    pub fn prices(mut self, prices: BTreeMap<String, Price>) -> Self {
        self.prices = prices;
        self
    }

    pub fn previous_costs(mut self, report: CostReport) -> Self {
        self.previous_costs = Some(report);
        self
    }

    pub fn max_parallel(mut self, cap: usize) -> Self {
        self.max_parallel = cap.max(1);
        self
    }

    pub fn max_output_tokens(mut self, n: u32) -> Self {
        self.max_output_tokens = n;
        self
    }

    pub fn build(self) -> Gateway {
        let ledger = match &self.previous_costs {
            Some(prev) => CostLedger::resume(self.prices.clone(), prev),
            None => CostLedger::new(self.prices.clone()),
        };
        Gateway {
            mode: self.mode,
            chat: self.chat,
            embedder: self.embedder,
            store: self.store,
            retry: self.retry,
            routing: self.routing,
            max_parallel: self.max_parallel,
            max_output_tokens: self.max_output_tokens,
            ledger: Mutex::new(ledger),
            occurrences: Mutex::new(HashMap::new()),
            backend_calls: AtomicU64::new(0),
        }
    }
}

fn sha_hex(value: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(value.to_string().as_bytes()))
}

/// Transcript key for a chat request: content hash of the messages, model,
/// purpose and occurrence number of this exact request.
pub fn chat_key(req: &ChatRequest, seq: u32) -> String {
    sha_hex(&json!({
        "messages": req.messages,
        "model": req.model,
        "purpose": req.purpose,
        "seq": seq,
    }))
}

pub fn embed_key(model: &str, text: &str) -> String {
    sha_hex(&json!({"embed_model": model, "text": text}))
}

impl Gateway {
    pub fn builder(mode: Mode) -> GatewayBuilder {
        GatewayBuilder {
            mode,
            chat: None,
            embedder: None,
            store: None,
            retry: RetryPolicy::default(),
            routing: ModelRouting::default(),
            prices: BTreeMap::new(),
            previous_costs: None,
            max_parallel: 8,
            max_output_tokens: 4096,
        }
    }

    /// Live gateway over the given backends, no transcripts.
    pub fn live(chat: Arc<dyn ChatBackend>, embedder: Arc<dyn EmbedBackend>) -> Self {
        Self::builder(Mode::Live)
            .chat(chat)
            .embedder(embedder)
            .build()
    }

    pub fn replay(store: TranscriptStore) -> Self {
        Self::builder(Mode::Replay).store(store).build()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn routing(&self) -> &ModelRouting {
        &self.routing
    }

    pub fn max_parallel(&self) -> usize {
        self.max_parallel
    }

    /// Number of attempts made against a real backend.
    pub fn backend_calls(&self) -> u64 {
        self.backend_calls.load(Ordering::SeqCst)
    }

    pub fn cost_report(&self) -> CostReport {
        self.ledger.lock().unwrap().report()
    }

    pub fn billed_calls(&self) -> usize {
        self.ledger.lock().unwrap().len()
    }

    /// A temperature-0 request routed to the model for `purpose`.
    pub fn request(&self, purpose: Purpose) -> ChatRequest {
        let mut req = ChatRequest::new(purpose, self.routing.model_for(purpose));
        req.max_output_tokens = self.max_output_tokens;
        req
    }

    fn next_seq(&self, req: &ChatRequest) -> u32 {
        let base = chat_key(req, 0);
        let mut occ = self.occurrences.lock().unwrap();
        let n = occ.entry(base).or_insert(0);
        let seq = *n;
        *n += 1;
        seq
    }

    fn call_backend(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let backend = self.chat.as_ref().ok_or(GatewayError::NoBackend)?;
        let mut attempt = 0u32;
        loop {
            self.backend_calls.fetch_add(1, Ordering::SeqCst);
            match backend.chat(req) {
                Ok(resp) => return Ok(resp),
                Err(BackendError::Fatal(msg)) => return Err(GatewayError::Backend(msg)),
                Err(BackendError::Transient(msg)) => {
                    if attempt >= self.retry.retry_limit {
                        return Err(GatewayError::Transport {
                            attempts: attempt + 1,
                            message: msg,
                        });
                    }
                    log::warn!(
                        "{} call failed (attempt {}): {msg}; retrying",
                        req.purpose.as_str(),
                        attempt + 1
                    );
                    std::thread::sleep(self.retry.delay(attempt));
                    attempt += 1;
                }
            }
        }
    }

    pub fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        req.validate()?;
        let seq = self.next_seq(req);
        let key = chat_key(req, seq);

        let stored = self.store.as_ref().and_then(|s| s.get(&key));
        let response = match (self.mode, stored) {
            (Mode::Replay | Mode::Record, Some(TranscriptEntry::Chat { response, .. })) => response,
            (Mode::Replay, _) => {
                return Err(GatewayError::ReplayMiss {
                    key,
                    purpose: req.purpose.as_str().to_string(),
                })
            }
            (Mode::Record, _) => {
                let response = self.call_backend(req)?;
                if let Some(store) = &self.store {
                    store.append(TranscriptEntry::Chat {
                        key: key.clone(),
                        purpose: req.purpose,
                        model: req.model.clone(),
                        response: response.clone(),
                    })?;
                }
                response
            }
            (Mode::Live, _) => self.call_backend(req)?,
        };
        self.ledger.lock().unwrap().record(
            &key,
            req.purpose,
            &req.model,
            response.prompt_tokens,
            response.completion_tokens,
        );
        Ok(response)
    }

    pub fn embed(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::InvalidRequest(
                "cannot embed empty text".into(),
            ));
        }
        let model = self
            .embedder
            .as_ref()
            .map_or(self.routing.embed_model.as_str(), |e| e.model());
        let key = embed_key(model, text);
        if let Some(TranscriptEntry::Embed { vector, .. }) =
            self.store.as_ref().and_then(|s| s.get(&key))
        {
            if self.mode != Mode::Live {
                return Ok(vector);
            }
        }
        if self.mode == Mode::Replay {
            return Err(GatewayError::ReplayMiss {
                key,
                purpose: "embed".into(),
            });
        }
        let embedder = self.embedder.as_ref().ok_or(GatewayError::NoBackend)?;
        self.backend_calls.fetch_add(1, Ordering::SeqCst);
        let vector = embedder.embed(text).map_err(|e| match e {
            BackendError::Transient(m) => GatewayError::Transport {
                attempts: 1,
                message: m,
            },
            BackendError::Fatal(m) => GatewayError::Backend(m),
        })?;
        if self.mode == Mode::Record {
            if let Some(store) = &self.store {
                store.append(TranscriptEntry::Embed {
                    key,
                    model: model.to_string(),
                    vector: vector.clone(),
                })?;
            }
        }
        Ok(vector)
    }

    /// Complete and parse, re-prompting up to `max_reprompts` times when the
    /// reply cannot be parsed.
    pub fn ask<T>(
        &self,
        req: ChatRequest,
        max_reprompts: u32,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<Asked<T>, AskError> {
        let mut req = req;
        let mut attempt = 0u32;
        loop {
            let resp = self.complete(&req)?;
            match parse(&resp.text) {
                Ok(value) => {
                    return Ok(Asked {
                        value,
                        reprompts: attempt,
                        raw: resp.text,
                    })
                }
                Err(reason) if attempt >= max_reprompts => {
                    return Err(AskError::Unparseable {
                        attempts: attempt + 1,
                        reason,
                        raw: resp.text,
                    })
                }
                Err(reason) => {
                    log::warn!(
                        "{} reply rejected: {reason}; re-prompting",
                        req.purpose.as_str()
                    );
                    req = req.assistant(resp.text).user(format!(
                        "Your previous reply could not be used: {reason}. \
                         Reply again, following the required output format exactly."
                    ));
                    attempt += 1;
                }
            }
        }
    }
}
