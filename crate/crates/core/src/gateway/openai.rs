//! OpenAI-compatible chat-completions and embeddings over blocking HTTP.

use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse, EmbedBackend};

pub const ENV_API_BASE: &str = "REPRO_API_BASE";
pub const ENV_API_KEY: &str = "REPRO_API_KEY";
pub const ENV_EMBED_BASE: &str = "REPRO_EMBED_BASE";
pub const ENV_EMBED_KEY: &str = "REPRO_EMBED_KEY";

#[derive(Debug, thiserror::Error)]
#[error("environment variable {0} is not set")]
pub struct MissingEnv(pub &'static str);

fn env(name: &'static str) -> Result<String, MissingEnv> {
    std::env::var(name)
        .ok()
        .filter(|v| !v.trim().is_empty())
        .ok_or(MissingEnv(name))
}

fn client(timeout: Duration) -> Client {
    Client::builder()
        .timeout(timeout)
        .build()
        .expect("http client builds")
}

fn classify(status: StatusCode, body: &str) -> BackendError {
    let msg = format!(
        "HTTP {status}: {}",
        body.chars().take(300).collect::<String>()
    );
    if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
        BackendError::Transient(msg)
    } else {
        BackendError::Fatal(msg)
    }
}

fn send(client: &Client, url: &str, key: &str, body: &Value) -> Result<Value, BackendError> {
    let resp = client
        .post(url)
        .bearer_auth(key)
        .json(body)
        .send()
        .map_err(|e| BackendError::Transient(e.to_string()))?;
    let status = resp.status();
    let text = resp
        .text()
        .map_err(|e| BackendError::Transient(e.to_string()))?;
    if !status.is_success() {
        return Err(classify(status, &text));
    }
    serde_json::from_str(&text).map_err(|e| BackendError::Fatal(format!("bad JSON body: {e}")))
}

pub struct OpenAiChat {
    base: String,
    key: String,
    client: Client,
}

impl OpenAiChat {
    pub fn new(base: impl Into<String>, key: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            key: key.into(),
            client: client(Duration::from_secs(600)),
        }
    }

    pub fn from_env() -> Result<Self, MissingEnv> {
        Ok(Self::new(env(ENV_API_BASE)?, env(ENV_API_KEY)?))
    }
}

impl ChatBackend for OpenAiChat {
    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let messages: Vec<Value> = req
            .messages
            .iter()
            .map(|m| json!({"role": m.role.as_str(), "content": m.content}))
            .collect();
        let body = json!({
            "model": req.model,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        });
        let started = Instant::now();
        let v = send(
            &self.client,
            &format!("{}/chat/completions", self.base),
            &self.key,
            &body,
        )?;
        let text = v["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| {
                BackendError::Fatal("response has no choices[0].message.content".into())
            })?
            .to_string();
        Ok(ChatResponse {
            text,
            prompt_tokens: v["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
            completion_tokens: v["usage"]["completion_tokens"].as_u64().unwrap_or(0),
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }
}

pub struct OpenAiEmbedder {
    base: String,
    key: String,
    model: String,
    client: Client,
}

impl OpenAiEmbedder {
    pub fn new(base: impl Into<String>, key: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            key: key.into(),
            model: model.into(),
            client: client(Duration::from_secs(120)),
        }
    }

    pub fn from_env(model: impl Into<String>) -> Result<Self, MissingEnv> {
        Ok(Self::new(env(ENV_EMBED_BASE)?, env(ENV_EMBED_KEY)?, model))
    }
}

impl EmbedBackend for OpenAiEmbedder {
    fn model(&self) -> &str {
        &self.model
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        let body = json!({"model": self.model, "input": text});
        let v = send(
            &self.client,
            &format!("{}/embeddings", self.base),
            &self.key,
            &body,
        )?;
        v["data"][0]["embedding"]
            .as_array()
            .and_then(|a| a.iter().map(Value::as_f64).collect::<Option<Vec<_>>>())
            .ok_or_else(|| BackendError::Fatal("response has no data[0].embedding".into()))
    }
}
