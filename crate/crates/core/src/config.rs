use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experience::{DEFAULT_CAPACITY, DEFAULT_E_MAX};
use crate::gateway::{Backend, BackendConfig, Gateway, HttpBackend, MockBackend, WireProtocol};
use crate::retrieval::FusionConfig;
use crate::trigger::TriggerConfig;

pub const DEFAULT_K_CANDIDATES: usize = 10;
pub const DEFAULT_K_SHOT: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub fusion: FusionConfig,
    pub trigger: TriggerConfig,
    /// Candidates kept from retrieval (K_c).
    pub k_candidates: usize,
    /// Experience entries handed to the reasoning prompt.
    pub e_max: usize,
    /// Support samples used per category when building.
    pub k_shot: usize,
    pub experience_capacity: usize,
    /// Return backend errors instead of falling back to the top-1 candidate.
    pub fail_hard: bool,
    /// Prefix the reasoning prompt with the learned self-belief strategy.
    pub inject_self_belief: bool,
    /// Worker threads for batch evaluation; `None` uses every available core.
    pub parallelism: Option<usize>,
    pub max_tokens: u32,
    pub gen_temperature: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            fusion: FusionConfig::default(),
            trigger: TriggerConfig::default(),
            k_candidates: DEFAULT_K_CANDIDATES,
            e_max: DEFAULT_E_MAX,
            k_shot: DEFAULT_K_SHOT,
            experience_capacity: DEFAULT_CAPACITY,
            fail_hard: false,
            inject_self_belief: false,
            parallelism: None,
            max_tokens: 512,
            gen_temperature: 0.0,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.fusion.validate()?;
        self.trigger.validate()?;
        if self.k_candidates == 0 {
            return Err(Error::InvalidConfig("k_candidates must be at least 1".into()));
        }
        if self.k_shot == 0 {
            return Err(Error::InvalidConfig("k_shot must be at least 1".into()));
        }
        if self.experience_capacity == 0 {
            return Err(Error::InvalidConfig("experience_capacity must be at least 1".into()));
        }
        if self.parallelism == Some(0) {
            return Err(Error::InvalidConfig("parallelism must be at least 1".into()));
        }
        if self.max_tokens == 0 || !(self.gen_temperature >= 0.0) {
            return Err(Error::InvalidConfig(
                "max_tokens must be positive and gen_temperature nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn gateway(&self, backend: Arc<dyn Backend>) -> Gateway {
        let mut gw = Gateway::new(backend);
        gw.max_tokens = self.max_tokens;
        gw.temperature = self.gen_temperature;
        gw
    }
}

/// Backend selector as written on the command line.
///
/// * `none`: no backend; escalations fall back to the top-1 candidate
/// * `mock:<rules.json>`: the deterministic mock
/// * `http` or `http:<url>`: native protocol, env overrides applied
/// * `chat:<url>`: chat-completions adapter, env overrides applied
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    None,
    Mock(PathBuf),
    Http {
        url: Option<String>,
        protocol: WireProtocol,
    },
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (kind, rest) = match s.split_once(':') {
            Some((k, r)) => (k, Some(r)),
            None => (s, None),
        };
        match (kind, rest) {
            ("none", None) => Ok(BackendSpec::None),
            ("mock", Some(path)) if !path.is_empty() => Ok(BackendSpec::Mock(path.into())),
            ("http", url) => Ok(BackendSpec::Http {
                url: url.map(str::to_string),
                protocol: WireProtocol::Native,
            }),
            ("chat", url) => Ok(BackendSpec::Http {
                url: url.map(str::to_string),
                protocol: WireProtocol::ChatCompletions,
            }),
            _ => Err(format!(
                "unknown backend '{s}': expected none, mock:<rules.json>, http[:<url>] or chat[:<url>]"
            )),
        }
    }
}

impl BackendSpec {
    pub fn open(&self) -> Result<Option<Arc<dyn Backend>>> {
        match self {
            BackendSpec::None => Ok(None),
            BackendSpec::Mock(path) => Ok(Some(Arc::new(MockBackend::from_file(path)?))),
            BackendSpec::Http { url, protocol } => {
                let mut cfg = BackendConfig::default().with_env_overrides();
                if let Some(url) = url {
                    // `http:` alone would give an empty url; keep the env value then.
                    if !url.is_empty() {
                        cfg.endpoint_url = if url.starts_with("//") {
                            format!("http:{url}")
                        } else {
                            url.clone()
                        };
                    }
                }
                cfg.protocol = *protocol;
                Ok(Some(Arc::new(HttpBackend::new(cfg))))
            }
        }
    }
}
