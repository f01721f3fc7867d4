//! `ecta.toml` run configuration. Every key is declared; unknown keys and
//! sections are rejected. Credentials are never read from this file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::metrics::{Aggregation, MalformedPolicy, TokenizerKind};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GatewayConfig {
    pub base_url: String,
    pub model_id: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub parallelism: usize,
    pub max_tokens: u32,
    pub mock_table_path: Option<PathBuf>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            base_url: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model_id: "chatglm-6b".into(),
            timeout_ms: 60_000,
            max_retries: 3,
            parallelism: 4,
            max_tokens: 1024,
            mock_table_path: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    /// Clause delimiter characters; the built-in set when absent.
    pub delimiters: Option<String>,
    /// One category label per line; the six standard categories when absent.
    pub categories_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub malformed_policy: MalformedPolicy,
    pub tokenizer: TokenizerKind,
    pub folds: usize,
    pub aggregation: Aggregation,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            malformed_policy: MalformedPolicy::default(),
            tokenizer: TokenizerKind::default(),
            folds: 10,
            aggregation: Aggregation::default(),
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub gateway: GatewayConfig,
    pub corpus: CorpusConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Invalid { path: PathBuf, detail: String },
}

impl RunConfig {
    pub fn parse(source: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(source)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = RunConfig::parse(&text).map_err(|e| ConfigError::Invalid {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.gateway.mock_table_path, &mut cfg.corpus.categories_path]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}
