//! Deterministic in-process backend driven by a rules file.
//!
//! ```json
//! {
//!   "rules": {
//!     "Answer ONLY with the final class name": "Siberian Husky",
//!     "image:img_0042.jpg": "Reasoning: ...\nPrediction: Alaskan Malamute",
//!     "sha256:9f86d0...": "canned text for one exact prompt"
//!   },
//!   "default": "Prediction: unknown"
//! }
//! ```
//!
//! Rules are tried in file order. A key prefixed `image:` matches when the
//! request carries that image ref, `sha256:` matches the hex digest of the
//! whole prompt, and any other key matches as a prompt substring.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{next_request_id, Backend, BackendError, GenerationRequest};
use crate::error::Result;
use crate::io;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockRules {
    #[serde(default)]
    pub rules: IndexMap<String, String>,
    #[serde(default)]
    pub default: Option<String>,
}

impl MockRules {
    pub fn with_default(text: impl Into<String>) -> Self {
        Self {
            rules: IndexMap::new(),
            default: Some(text.into()),
        }
    }

    pub fn rule(mut self, key: impl Into<String>, response: impl Into<String>) -> Self {
        self.rules.insert(key.into(), response.into());
        self
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }
}

pub fn prompt_digest(prompt: &str) -> String {
    let digest = Sha256::digest(prompt.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Default)]
pub struct MockBackend {
    rules: MockRules,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(rules: MockRules) -> Self {
        Self {
            rules,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(Self::new(MockRules::load(path)?))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    fn lookup(&self, req: &GenerationRequest) -> Option<&str> {
        let mut digest = None;
        for (key, response) in &self.rules.rules {
            let hit = if let Some(img) = key.strip_prefix("image:") {
                req.image_refs.iter().any(|r| r == img)
            } else if let Some(hex) = key.strip_prefix("sha256:") {
                let d = digest.get_or_insert_with(|| prompt_digest(&req.prompt_text));
                d.eq_ignore_ascii_case(hex)
            } else {
                req.prompt_text.contains(key.as_str())
            };
            if hit {
                return Some(response);
            }
        }
        self.rules.default.as_deref()
    }
}

impl Backend for MockBackend {
    fn generate(&self, req: &GenerationRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.lookup(req)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Protocol {
                request_id: next_request_id(),
                message: "no mock rule matched and no default response is set".into(),
            })
    }

    fn describe(&self) -> String {
        format!("mock ({} rules)", self.rules.rules.len())
    }
}
