//! Text-generation backends and the prompt layer around them.

mod http;
mod mock;
pub mod parse;
pub mod prompts;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use http::HttpBackend;
pub use mock::{MockBackend, MockRules};
pub use parse::{parse_prediction, ParsedPrediction};
pub use prompts::PromptTemplateSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt_text: String,
    pub image_refs: Vec<String>,
    pub max_tokens: u32,
    pub temperature: f64,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum BackendError {
    #[error("[{request_id}] request timed out")]
    Timeout { request_id: String },
    #[error("[{request_id}] transport error: {message}")]
    Transport { request_id: String, message: String },
    #[error("[{request_id}] backend returned HTTP {code}: {body}")]
    BadStatus {
        request_id: String,
        code: u16,
        body: String,
    },
    #[error("[{request_id}] malformed backend response: {message}")]
    Protocol { request_id: String, message: String },
    #[error("[{request_id}] invalid request: {message}")]
    InvalidRequest { request_id: String, message: String },
}

impl BackendError {
    pub fn request_id(&self) -> &str {
        match self {
            BackendError::Timeout { request_id }
            | BackendError::Transport { request_id, .. }
            | BackendError::BadStatus { request_id, .. }
            | BackendError::Protocol { request_id, .. }
            | BackendError::InvalidRequest { request_id, .. } => request_id,
        }
    }

    /// Whether the failure means the backend could not be reached at all,
    /// as opposed to answering badly.
    pub fn is_unreachable(&self) -> bool {
        matches!(
            self,
            BackendError::Timeout { .. } | BackendError::Transport { .. }
        ) || matches!(self, BackendError::BadStatus { code, .. } if *code >= 500)
    }
}

static REQUEST_SEQ: AtomicU64 = AtomicU64::new(1);

pub fn next_request_id() -> String {
    format!(
        "sare-{}-{}",
        std::process::id(),
        REQUEST_SEQ.fetch_add(1, Ordering::Relaxed)
    )
}

pub trait Backend: Send + Sync {
    fn generate(&self, req: &GenerationRequest) -> Result<String, BackendError>;

    fn describe(&self) -> String {
        "backend".into()
    }
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn generate(&self, req: &GenerationRequest) -> Result<String, BackendError> {
        (**self).generate(req)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireProtocol {
    /// `{model, messages, max_tokens, temperature}` in, `{text}` out.
    #[default]
    Native,
    /// Chat-completion servers: `choices[0].message.content` out.
    ChatCompletions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub endpoint_url: String,
    #[serde(skip_serializing)]
    pub auth_token: Option<String>,
    pub model_name: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    /// First retry delay; doubles on each further attempt.
    pub backoff_ms: u64,
    pub protocol: WireProtocol,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "http://127.0.0.1:8000/generate".into(),
            auth_token: None,
            model_name: "default".into(),
            timeout_ms: 60_000,
            max_retries: 2,
            backoff_ms: 250,
            protocol: WireProtocol::Native,
        }
    }
}

impl BackendConfig {
    /// Applies `SARE_BACKEND_URL`, `SARE_BACKEND_KEY` and
    /// `SARE_BACKEND_MODEL` on top of `self`.
    pub fn with_env_overrides(mut self) -> Self {
        self.apply_overrides(|k| std::env::var(k).ok());
        self
    }

    fn apply_overrides(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        if let Some(url) = lookup("SARE_BACKEND_URL") {
            self.endpoint_url = url;
        }
        if let Some(key) = lookup("SARE_BACKEND_KEY") {
            self.auth_token = Some(key);
        }
        if let Some(model) = lookup("SARE_BACKEND_MODEL") {
            self.model_name = model;
        }
    }
}

/// A backend plus the decoding parameters and templates used for every call.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn Backend>,
    pub templates: PromptTemplateSet,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Self {
            backend,
            templates: PromptTemplateSet::default(),
            max_tokens: 512,
            temperature: 0.0,
        }
    }

    pub fn backend(&self) -> &Arc<dyn Backend> {
        &self.backend
    }

    pub fn ask(&self, prompt: String, image_refs: &[String]) -> Result<String, BackendError> {
        let req = GenerationRequest {
            prompt_text: prompt,
            image_refs: image_refs.to_vec(),
            max_tokens: self.max_tokens,
            temperature: self.temperature,
        };
        generate(self.backend.as_ref(), &req)
    }
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.describe())
            .field("max_tokens", &self.max_tokens)
            .field("temperature", &self.temperature)
            .finish()
    }
}

/// Validates the request and forwards it to `backend`.
pub fn generate(backend: &dyn Backend, req: &GenerationRequest) -> Result<String, BackendError> {
    if req.prompt_text.trim().is_empty() {
        return Err(BackendError::InvalidRequest {
            request_id: next_request_id(),
            message: "prompt_text is blank".into(),
        });
    }
    if req.max_tokens == 0 || !(req.temperature >= 0.0) {
        return Err(BackendError::InvalidRequest {
            request_id: next_request_id(),
            message: "max_tokens must be positive and temperature nonnegative".into(),
        });
    }
    backend.generate(req)
}
