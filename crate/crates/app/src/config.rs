//! TOML configuration. Every section is optional; unknown keys are errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use datanav_core::dedup::DedupParams;
use datanav_core::linkhealth::{ProbeConfig, WeightParams};
use datanav_core::search::Bm25Params;
use datanav_core::tagging::TagParams;
use serde::{Deserialize, Serialize};

use crate::AppError;

/// Environment variable overriding the store location.
pub const STORE_ENV: &str = "DATANAV_STORE";
pub const DEFAULT_STORE: &str = "datanav-store.jsonl";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub store: Option<PathBuf>,
    pub dedup: DedupParams,
    pub tagging: TagParams,
    pub linkhealth: LinkHealthConfig,
    pub search: Bm25Params,
    pub sources: SourcesConfig,
    pub lm: LmConfig,
    pub embedding: EmbeddingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkHealthConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub epsilon: f64,
    pub k_total: u64,
    pub k_min: u64,
    pub k_max: u64,
    pub tau_alive: f64,
    /// Per-request timeout in seconds.
    pub timeout: f64,
    pub retries: u32,
    pub max_inflight: usize,
    pub per_host: usize,
    pub seed: u64,
}

impl Default for LinkHealthConfig {
    fn default() -> Self {
        let w = WeightParams::default();
        let p = ProbeConfig::default();
        Self {
            lambda1: w.lambda1,
            lambda2: w.lambda2,
            epsilon: w.epsilon,
            k_total: w.k_total,
            k_min: w.k_min,
            k_max: w.k_max,
            tau_alive: w.tau_alive,
            timeout: p.timeout.as_secs_f64(),
            retries: p.retries,
            max_inflight: p.max_inflight,
            per_host: p.per_host,
            seed: 42,
        }
    }
}

impl LinkHealthConfig {
    pub fn weights(&self) -> WeightParams {
        WeightParams {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            epsilon: self.epsilon,
            k_total: self.k_total,
            k_min: self.k_min,
            k_max: self.k_max,
            tau_alive: self.tau_alive,
        }
    }

    pub fn probe(&self, base_url: Option<String>) -> ProbeConfig {
        ProbeConfig {
            timeout: Duration::from_secs_f64(self.timeout),
            retries: self.retries,
            max_inflight: self.max_inflight,
            per_host: self.per_host,
            base_url,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourcesConfig {
    /// Canonical-record election prefers sources listed earlier.
    pub priority: Vec<String>,
    /// Per-source field aliases: source name to (raw field to unified field).
    pub aliases: BTreeMap<String, BTreeMap<String, String>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LmProvider {
    #[default]
    Stub,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmConfig {
    pub provider: LmProvider,
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub timeout: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            provider: LmProvider::Stub,
            endpoint: String::new(),
            model: String::new(),
            api_key_env: None,
            timeout: 60.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingProvider {
    #[default]
    Hashed,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub provider: EmbeddingProvider,
    /// Precomputed vectors consulted before the provider.
    pub fixture: Option<PathBuf>,
    pub endpoint: String,
    pub model: String,
    pub dim: usize,
    pub api_key_env: Option<String>,
    pub timeout: f64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            provider: EmbeddingProvider::Hashed,
            fixture: None,
            endpoint: String::new(),
            model: String::new(),
            dim: 256,
            api_key_env: None,
            timeout: 60.0,
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, AppError> {
        let cfg: Config = toml::from_str(text).map_err(|e| AppError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`; relative paths inside the file resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.store.as_mut() {
            rebase(p);
        }
        if let Some(p) = cfg.embedding.fixture.as_mut() {
            rebase(p);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), AppError> {
        let bad = |e: &dyn std::fmt::Display| AppError::Config(e.to_string());
        self.dedup.validate().map_err(|e| bad(&e))?;
        self.tagging.validate().map_err(|e| bad(&e))?;
        self.linkhealth.weights().validate().map_err(|e| bad(&e))?;
        let lh = &self.linkhealth;
        if !(lh.timeout.is_finite() && lh.timeout > 0.0) {
            return Err(AppError::Config("linkhealth.timeout must be positive".into()));
        }
        if lh.max_inflight == 0 || lh.per_host == 0 {
            return Err(AppError::Config("linkhealth.max_inflight and per_host must be at least 1".into()));
        }
        if !(self.search.kappa.is_finite() && self.search.kappa >= 0.0) {
            return Err(AppError::Config("search.kappa must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.search.beta) {
            return Err(AppError::Config("search.beta must lie in [0, 1]".into()));
        }
        if self.lm.provider == LmProvider::External && self.lm.endpoint.is_empty() {
            return Err(AppError::Config("lm.endpoint is required for the external provider".into()));
        }
        if self.embedding.provider == EmbeddingProvider::External && self.embedding.endpoint.is_empty() {
            return Err(AppError::Config("embedding.endpoint is required for the external provider".into()));
        }
        if self.embedding.dim == 0 {
            return Err(AppError::Config("embedding.dim must be positive".into()));
        }
        Ok(())
    }

    /// `--store`, then the environment, then the config file, then the
    /// default name in the working directory.
    pub fn store_path(&self, flag: Option<&Path>, env: Option<&str>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| env.filter(|s| !s.is_empty()).map(PathBuf::from))
            .or_else(|| self.store.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_STORE))
    }
}
