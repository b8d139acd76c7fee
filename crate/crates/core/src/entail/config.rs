//! Backend configuration and the built-in model roster.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    BackendError, BackendInfo, EntailmentBackend, NormalizationMode, RemoteBackend, StubBackend, StubConfig,
    TruncationPolicy,
};
use crate::scalar::Real;

/// Environment variable overriding the endpoint of the built-in remote backends.
pub const ENDPOINT_ENV: &str = "SUDNLI_ENDPOINT";
pub const DEFAULT_ENDPOINT: &str = "http://127.0.0.1:8765";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    /// Scoring endpoint speaking the `/score` protocol.
    Remote,
    Stub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub id: String,
    pub adapter: AdapterKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default = "default_max_len")]
    pub max_premise_length: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub normalization: NormalizationMode,
    #[serde(default)]
    pub truncation: TruncationPolicy,
    #[serde(default = "default_mask")]
    pub mask_symbol: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stub: Option<StubConfig>,
}

fn default_max_len() -> usize {
    512
}
fn default_batch() -> usize {
    16
}
fn default_in_flight() -> usize {
    1
}
fn default_mask() -> String {
    "[MASK]".into()
}
fn default_timeout() -> u64 {
    120
}
fn default_retries() -> u32 {
    2
}

impl BackendConfig {
    pub fn stub(id: impl Into<String>, stub: StubConfig) -> Self {
        Self {
            id: id.into(),
            adapter: AdapterKind::Stub,
            checkpoint: None,
            endpoint: None,
            max_premise_length: default_max_len(),
            batch_size: default_batch(),
            max_in_flight: default_in_flight(),
            normalization: NormalizationMode::default(),
            truncation: TruncationPolicy::default(),
            mask_symbol: default_mask(),
            timeout_secs: default_timeout(),
            retries: default_retries(),
            stub: Some(stub),
        }
    }

    fn remote(id: &str, checkpoint: &str, max_len: usize, mask: &str) -> Self {
        Self {
            adapter: AdapterKind::Remote,
            checkpoint: Some(checkpoint.into()),
            endpoint: None,
            max_premise_length: max_len,
            mask_symbol: mask.into(),
            stub: None,
            ..Self::stub(id, StubConfig::default())
        }
    }

    pub fn info(&self) -> BackendInfo {
        BackendInfo {
            backend_id: self.id.clone(),
            max_premise_length: self.max_premise_length,
            mask_symbol: self.mask_symbol.clone(),
            batch_size: self.batch_size.max(1),
            max_in_flight: self.max_in_flight.max(1),
            normalization: self.normalization,
            truncation: self.truncation,
        }
    }

    /// Explicit endpoint, else `$SUDNLI_ENDPOINT`, else [`DEFAULT_ENDPOINT`].
    pub fn resolved_endpoint(&self) -> String {
        self.endpoint
            .clone()
            .or_else(|| std::env::var(ENDPOINT_ENV).ok())
            .unwrap_or_else(|| DEFAULT_ENDPOINT.to_string())
    }
}

/// The four NLI checkpoints plus a hashed stub (`stub`).
pub fn builtin_backends() -> Vec<BackendConfig> {
    vec![
        BackendConfig::remote("roberta-large-mnli", "FacebookAI/roberta-large-mnli", 512, "<mask>"),
        BackendConfig::remote("bart-large-mnli", "facebook/bart-large-mnli", 1024, "<mask>"),
        BackendConfig::remote("xlm-roberta-large-xnli-anli", "vicgalle/xlm-roberta-large-xnli-anli", 512, "<mask>"),
        BackendConfig::remote(
            "mdeberta-v3-xnli-multilingual",
            "MoritzLaurer/mDeBERTa-v3-base-xnli-multilingual-nli-2mil7",
            512,
            "[MASK]",
        ),
        BackendConfig::stub("stub", StubConfig { hash_seed: Some(0), ..Default::default() }),
    ]
}

pub fn build_backend<F: Real>(config: &BackendConfig) -> Result<Arc<dyn EntailmentBackend<F>>, BackendError> {
    let info = config.info();
    match config.adapter {
        AdapterKind::Stub => {
            let stub = StubBackend::from_config(info, config.stub.as_ref().unwrap_or(&StubConfig::default()))?;
            Ok(Arc::new(stub))
        }
        AdapterKind::Remote => {
            let model = config.checkpoint.clone().unwrap_or_else(|| config.id.clone());
            Ok(Arc::new(RemoteBackend::new(
                info,
                config.resolved_endpoint(),
                model,
                Duration::from_secs(config.timeout_secs),
                config.retries,
            )))
        }
    }
}

/// Named backend configurations: the built-in roster plus user entries,
/// later entries replacing earlier ones with the same id.
#[derive(Debug, Clone)]
pub struct BackendRegistry {
    configs: Vec<BackendConfig>,
}

#[derive(Deserialize)]
struct BackendFile {
    #[serde(default, rename = "backend")]
    backends: Vec<BackendConfig>,
}

impl Default for BackendRegistry {
    fn default() -> Self {
        Self { configs: builtin_backends() }
    }
}

impl BackendRegistry {
    pub fn empty() -> Self {
        Self { configs: Vec::new() }
    }

    pub fn add(&mut self, config: BackendConfig) {
        self.configs.retain(|c| c.id != config.id);
        self.configs.push(config);
    }

    /// Adds the `[[backend]]` tables of a TOML file.
    pub fn load_file(&mut self, path: impl AsRef<Path>) -> Result<(), BackendError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("reading {}: {e}", path.display())))?;
        self.load_str(&text)
    }

    pub fn load_str(&mut self, text: &str) -> Result<(), BackendError> {
        let file: BackendFile = toml::from_str(text).map_err(|e| BackendError::Config(e.to_string()))?;
        for c in file.backends {
            self.add(c);
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&BackendConfig> {
        self.configs.iter().find(|c| c.id == id)
    }

    pub fn configs(&self) -> &[BackendConfig] {
        &self.configs
    }

    pub fn build<F: Real>(&self, id: &str) -> Result<Arc<dyn EntailmentBackend<F>>, BackendError> {
        let cfg = self.get(id).ok_or_else(|| BackendError::Config(format!("unknown backend {id:?}")))?;
        build_backend(cfg)
    }
}
