//! `repro.toml`: the declarative run configuration. Secrets are never read
//! from it; API keys come from the environment only.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use repro_core::codegen::CodegenConfig;
use repro_core::fingerprint::FingerprintConfig;
use repro_core::gateway::openai::{
    OpenAiChat, OpenAiEmbedder, ENV_API_BASE, ENV_API_KEY, ENV_EMBED_BASE, ENV_EMBED_KEY,
};
use repro_core::gateway::{
    ChatBackend, CostReport, EmbedBackend, HashEmbedder, ModelRouting, Price, RetryPolicy,
    StoreError, TranscriptStore,
};
use repro_core::reflect::LoopConfig;
use repro_core::{Gateway, Mode};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedBackendKind {
    /// offline feature-hashing embedder
    Hash,
    /// OpenAI-compatible embeddings endpoint
    Openai,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsConfig {
    pub analysis_model: String,
    pub coding_model: String,
    /// required for the openai embed backend; the hash backend names itself
    pub embed_model: Option<String>,
    pub embed_backend: EmbedBackendKind,
    pub hash_dim: usize,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        let routing = ModelRouting::default();
        Self {
            analysis_model: routing.analysis_model,
            coding_model: routing.coding_model,
            embed_model: None,
            embed_backend: EmbedBackendKind::Hash,
            hash_dim: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    /// fallback when REPRO_API_BASE is unset
    pub api_base: Option<String>,
    /// fallback when REPRO_EMBED_BASE is unset
    pub embed_base: Option<String>,
    pub max_parallel: usize,
    pub retry_limit: u32,
    pub max_output_tokens: u32,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            api_base: None,
            embed_base: None,
            max_parallel: 8,
            retry_limit: 3,
            max_output_tokens: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub paper_path: PathBuf,
    #[serde(default)]
    pub run_dir: Option<PathBuf>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    /// defaults to `<run_dir>/transcripts.jsonl`
    #[serde(default)]
    pub transcripts: Option<PathBuf>,
    #[serde(default)]
    pub rubric_path: Option<PathBuf>,
    #[serde(default)]
    pub models: ModelsConfig,
    #[serde(default)]
    pub gateway: GatewayConfig,
    #[serde(default)]
    pub fingerprint: FingerprintConfig,
    #[serde(default)]
    pub codegen: CodegenConfig,
    #[serde(default, rename = "loop")]
    pub loop_cfg: LoopConfig,
    /// model name -> price per 1k tokens
    #[serde(default)]
    pub prices: BTreeMap<String, Price>,
}

fn default_mode() -> Mode {
    Mode::Live
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::input(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load and resolve relative paths against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.paper_path);
        for p in [&mut cfg.run_dir, &mut cfg.transcripts, &mut cfg.rubric_path]
            .into_iter()
            .flatten()
        {
            resolve(p);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: &str| Err(CliError::input(format!("invalid config: {m}")));
        if self.loop_cfg.max_iterations < 1 {
            return fail("loop.max_iterations must be at least 1");
        }
        if self.models.hash_dim == 0 {
            return fail("models.hash_dim must be positive");
        }
        if self.models.embed_backend == EmbedBackendKind::Openai
            && self.models.embed_model.is_none()
        {
            return fail("models.embed_model is required with embed_backend = \"openai\"");
        }
        if !(0.0..=1.0).contains(&self.fingerprint.dedup_threshold) {
            return fail("fingerprint.dedup_threshold must be within [0, 1]");
        }
        if self.fingerprint.filter_cap == 0 || self.fingerprint.top_k_paragraphs == 0 {
            return fail(
                "fingerprint.filter_cap and fingerprint.top_k_paragraphs must be positive",
            );
        }
        if self.gateway.max_parallel == 0 || self.loop_cfg.feedback_batch_size == 0 {
            return fail("gateway.max_parallel and loop.feedback_batch_size must be positive");
        }
        Ok(())
    }

    pub fn embed_model(&self) -> String {
        match self.models.embed_backend {
            EmbedBackendKind::Hash => HashEmbedder::new(self.models.hash_dim).model().to_string(),
            EmbedBackendKind::Openai => self.models.embed_model.clone().unwrap_or_default(),
        }
    }

    pub fn routing(&self) -> ModelRouting {
        ModelRouting {
            analysis_model: self.models.analysis_model.clone(),
            coding_model: self.models.coding_model.clone(),
            embed_model: self.embed_model(),
        }
    }
}

/// Backends supplied by the caller instead of the configured HTTP clients.
#[derive(Clone, Default)]
pub struct Backends {
    pub chat: Option<Arc<dyn ChatBackend>>,
    pub embedder: Option<Arc<dyn EmbedBackend>>,
}

fn env_or(name: &'static str, fallback: &Option<String>) -> Option<String> {
    std::env::var(name)
        .ok()
        .filter(|v| !v.trim().is_empty())
        .or_else(|| fallback.clone())
}

fn env_key(name: &'static str) -> Result<String, CliError> {
    std::env::var(name)
        .ok()
        .filter(|v| !v.trim().is_empty())
        .ok_or_else(|| CliError::input(format!("environment variable {name} is not set")))
}

fn embedder(
    cfg: &RunConfig,
    mode: Mode,
    given: &Backends,
) -> Result<Arc<dyn EmbedBackend>, CliError> {
    if let Some(e) = &given.embedder {
        return Ok(e.clone());
    }
    Ok(match cfg.models.embed_backend {
        EmbedBackendKind::Hash => Arc::new(HashEmbedder::new(cfg.models.hash_dim)),
        // in replay only the model name is used, to form transcript keys
        EmbedBackendKind::Openai if mode == Mode::Replay => {
            Arc::new(OpenAiEmbedder::new("", "", cfg.embed_model()))
        }
        EmbedBackendKind::Openai => {
            let base = env_or(ENV_EMBED_BASE, &cfg.gateway.embed_base).ok_or_else(|| {
                CliError::input(format!("set {ENV_EMBED_BASE} or gateway.embed_base"))
            })?;
            Arc::new(OpenAiEmbedder::new(
                base,
                env_key(ENV_EMBED_KEY)?,
                cfg.embed_model(),
            ))
        }
    })
}

fn chat(cfg: &RunConfig, given: &Backends) -> Result<Arc<dyn ChatBackend>, CliError> {
    if let Some(c) = &given.chat {
        return Ok(c.clone());
    }
    let base = env_or(ENV_API_BASE, &cfg.gateway.api_base)
        .ok_or_else(|| CliError::input(format!("set {ENV_API_BASE} or gateway.api_base")))?;
    Ok(Arc::new(OpenAiChat::new(base, env_key(ENV_API_KEY)?)))
}

/// Gateway for one command. Replay needs an existing transcript file; a
/// missing one is reported as a replay miss.
pub fn build_gateway(
    cfg: &RunConfig,
    mode: Mode,
    transcripts: &Path,
    given: &Backends,
    previous_costs: Option<CostReport>,
) -> Result<Gateway, CliError> {
    let embedder = embedder(cfg, mode, given)?;
    let mut routing = cfg.routing();
    routing.embed_model = embedder.model().to_string();
    let mut b = Gateway::builder(mode)
        .embedder(embedder)
        .routing(routing)
        .prices(cfg.prices.clone())
        .max_parallel(cfg.gateway.max_parallel)
        .max_output_tokens(cfg.gateway.max_output_tokens)
        .retry(RetryPolicy {
            retry_limit: cfg.gateway.retry_limit,
            ..RetryPolicy::default()
        });
    if let Some(prev) = previous_costs {
        b = b.previous_costs(prev);
    }
    b = match mode {
        Mode::Replay => b.store(TranscriptStore::open_replay(transcripts).map_err(
            |e| match e {
                StoreError::Missing(p) => {
                    CliError::ReplayMiss(format!("transcript file {} does not exist", p.display()))
                }
                other => CliError::input(other.to_string()),
            },
        )?),
        Mode::Record => b.chat(chat(cfg, given)?).store(
            TranscriptStore::open_record(transcripts)
                .map_err(|e| CliError::input(e.to_string()))?,
        ),
        Mode::Live => b.chat(chat(cfg, given)?),
    };
    Ok(b.build())
}
