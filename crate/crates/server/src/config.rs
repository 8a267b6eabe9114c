//! Server configuration file.
//!
//! ```toml
//! base_url = "https://exam.example.org"
//! bind = "127.0.0.1:8080"
//! data_dir = "/var/lib/mindexam"
//! history_depth = 20
//! provider_timeout_secs = 60
//!
//! [[instructors]]
//! id = "prof-w"
//! token = "change-me"
//!
//! [[providers]]
//! ref = "openai"
//! kind = "openai_compatible"
//! endpoint = "https://api.openai.com/v1"
//! model = "gpt-5"
//!
//! [[providers]]
//! ref = "web"
//! kind = "json_search"
//! endpoint = "https://search.internal/api"
//! ```
//!
//! A provider's API key is read from `MINDEXAM_PROVIDER_<REF>_KEY`, with the
//! ref upper-cased and `-` replaced by `_`. The `mock` provider ref is always
//! available.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use mindexam_core::domain::InstructorId;
use mindexam_core::gateway::{GatewayConfig, ProviderRegistry, DEFAULT_HISTORY_DEPTH};
use serde::Deserialize;
use thiserror::Error;

use crate::providers::{JsonSearchProvider, OpenAiCompatibleProvider};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    #[serde(default = "default_base_url")]
    pub base_url: String,
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    #[serde(default = "default_history_depth")]
    pub history_depth: usize,
    #[serde(default = "default_timeout")]
    pub provider_timeout_secs: u64,
    #[serde(default)]
    pub instructors: Vec<InstructorEntry>,
    #[serde(default)]
    pub providers: Vec<ProviderEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructorEntry {
    pub id: InstructorId,
    pub token: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ProviderEntry {
    #[serde(rename = "ref")]
    pub provider_ref: String,
    #[serde(flatten)]
    pub kind: ProviderKind,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderKind {
    Mock,
    OpenaiCompatible { endpoint: String, model: String },
    JsonSearch { endpoint: String },
}

fn default_base_url() -> String {
    "http://127.0.0.1:8080".into()
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

fn default_data_dir() -> PathBuf {
    PathBuf::from("mindexam-data")
}

fn default_history_depth() -> usize {
    DEFAULT_HISTORY_DEPTH
}

fn default_timeout() -> u64 {
    60
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl Default for ServerConfig {
    fn default() -> Self {
        toml::from_str("").expect("every field has a default")
    }
}

impl ServerConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ServerConfig = toml::from_str(text)?;
        let mut seen = HashMap::new();
        for i in &cfg.instructors {
            if i.token.len() < 16 {
                return Err(ConfigError::Invalid(format!(
                    "token of instructor {} is shorter than 16 characters",
                    i.id
                )));
            }
            if seen.insert(i.token.as_str(), &i.id).is_some() {
                return Err(ConfigError::Invalid(format!(
                    "instructor {} reuses another instructor's token",
                    i.id
                )));
            }
        }
        Ok(cfg)
    }

    pub fn gateway(&self) -> GatewayConfig {
        GatewayConfig {
            history_depth: self.history_depth,
            provider_timeout: Duration::from_secs(self.provider_timeout_secs),
        }
    }

    pub fn instructor_tokens(&self) -> HashMap<String, InstructorId> {
        self.instructors
            .iter()
            .map(|i| (i.token.clone(), i.id.clone()))
            .collect()
    }

    /// Builds adapters for every configured provider, reading credentials via `env`.
    pub fn providers(&self, env: impl Fn(&str) -> Option<String>) -> ProviderRegistry {
        let mut reg = ProviderRegistry::with_mocks();
        for p in &self.providers {
            let key = env(&credential_var(&p.provider_ref));
            match &p.kind {
                ProviderKind::Mock => {
                    let mocks = ProviderRegistry::with_mocks();
                    if let (Ok(chat), Ok(search)) = (mocks.chat("mock"), mocks.search("mock")) {
                        reg.register_chat(p.provider_ref.clone(), chat);
                        reg.register_search(p.provider_ref.clone(), search);
                    }
                }
                ProviderKind::OpenaiCompatible { endpoint, model } => {
                    reg.register_chat(
                        p.provider_ref.clone(),
                        Arc::new(OpenAiCompatibleProvider::new(
                            endpoint.clone(),
                            model.clone(),
                            key,
                        )),
                    );
                }
                ProviderKind::JsonSearch { endpoint } => {
                    reg.register_search(
                        p.provider_ref.clone(),
                        Arc::new(JsonSearchProvider::new(endpoint.clone(), key)),
                    );
                }
            }
        }
        reg
    }
}

pub fn credential_var(provider_ref: &str) -> String {
    format!(
        "MINDEXAM_PROVIDER_{}_KEY",
        provider_ref.to_ascii_uppercase().replace('-', "_")
    )
}
