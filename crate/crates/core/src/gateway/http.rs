//! JSON-over-HTTP backend with retry and exponential backoff.

use std::sync::OnceLock;
use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};
use tracing::warn;

use super::{next_request_id, Backend, BackendConfig, BackendError, GenerationRequest, WireProtocol};

/// Blocking HTTP client for a generation server.
///
/// The underlying client is created on first use. It owns a private
/// runtime, so the backend must not be created or dropped from inside an
/// async task; call it from a blocking context instead.
pub struct HttpBackend {
    cfg: BackendConfig,
    client: OnceLock<Result<Client, String>>,
}

impl HttpBackend {
    pub fn new(cfg: BackendConfig) -> Self {
        Self {
            cfg,
            client: OnceLock::new(),
        }
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    fn client(&self, request_id: &str) -> Result<&Client, BackendError> {
        self.client
            .get_or_init(|| {
                Client::builder()
                    .timeout(Duration::from_millis(self.cfg.timeout_ms))
                    .build()
                    .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| BackendError::Transport {
                request_id: request_id.to_string(),
                message: format!("client setup failed: {e}"),
            })
    }

    pub fn request_body(&self, req: &GenerationRequest) -> Value {
        let mut content = vec![json!({"type": "text", "text": req.prompt_text})];
        match self.cfg.protocol {
            WireProtocol::Native => {
                content.extend(
                    req.image_refs
                        .iter()
                        .map(|r| json!({"type": "image_ref", "ref": r})),
                );
            }
            WireProtocol::ChatCompletions => {
                content.extend(
                    req.image_refs
                        .iter()
                        .map(|r| json!({"type": "image_url", "image_url": {"url": r}})),
                );
            }
        }
        json!({
            "model": self.cfg.model_name,
            "messages": [{"role": "user", "content": content}],
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
        })
    }

    fn extract_text(&self, body: &Value) -> Option<String> {
        let text = match self.cfg.protocol {
            WireProtocol::Native => body.get("text"),
            WireProtocol::ChatCompletions => body.pointer("/choices/0/message/content"),
        };
        text.and_then(Value::as_str).map(str::to_string)
    }

    fn attempt(&self, request_id: &str, body: &Value) -> Result<String, BackendError> {
        let client = self.client(request_id)?;
        let mut builder = client
            .post(&self.cfg.endpoint_url)
            .header("x-request-id", request_id)
            .json(body);
        if let Some(token) = &self.cfg.auth_token {
            builder = builder.bearer_auth(token);
        }
        let resp = builder.send().map_err(|e| classify_error(request_id, &e))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| classify_error(request_id, &e))?;
        if !status.is_success() {
            return Err(BackendError::BadStatus {
                request_id: request_id.to_string(),
                code: status.as_u16(),
                body: text.chars().take(512).collect(),
            });
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| BackendError::Protocol {
            request_id: request_id.to_string(),
            message: format!("response is not JSON: {e}"),
        })?;
        self.extract_text(&value).ok_or_else(|| BackendError::Protocol {
            request_id: request_id.to_string(),
            message: "response has no text field".into(),
        })
    }
}

fn classify_error(request_id: &str, e: &reqwest::Error) -> BackendError {
    if e.is_timeout() {
        BackendError::Timeout {
            request_id: request_id.to_string(),
        }
    } else {
        BackendError::Transport {
            request_id: request_id.to_string(),
            message: e.to_string(),
        }
    }
}

fn retryable(err: &BackendError) -> bool {
    match err {
        BackendError::Timeout { .. } | BackendError::Transport { .. } => true,
        BackendError::BadStatus { code, .. } => {
            *code == StatusCode::TOO_MANY_REQUESTS.as_u16() || *code >= 500
        }
        _ => false,
    }
}

impl Backend for HttpBackend {
    fn generate(&self, req: &GenerationRequest) -> Result<String, BackendError> {
        let request_id = next_request_id();
        let body = self.request_body(req);
        let mut attempt = 0u32;
        loop {
            match self.attempt(&request_id, &body) {
                Ok(text) => return Ok(text),
                Err(err) if retryable(&err) && attempt < self.cfg.max_retries => {
                    let delay = Duration::from_millis(
                        self.cfg.backoff_ms.saturating_mul(1u64 << attempt.min(16)),
                    );
                    warn!(%err, attempt, ?delay, "backend call failed, retrying");
                    thread::sleep(delay);
                    attempt += 1;
                }
                Err(err) => return Err(err),
            }
        }
    }

    fn describe(&self) -> String {
        format!("http {} ({})", self.cfg.endpoint_url, self.cfg.model_name)
    }
}
