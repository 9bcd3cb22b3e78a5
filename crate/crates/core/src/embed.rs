//! Text embedders shared by deduplication and tagging.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;

use crate::exec::ExecMode;
use crate::text::{char_ngrams, hash64};

pub const DEFAULT_DIM: usize = 256;
pub const DEFAULT_EMBED_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EmbedError {
    #[error("embedder failure: {0}")]
    EmbedderFailure(String),
    #[error("fixture: {0}")]
    Fixture(String),
}

/// A unit-length vector. The only exception is the zero vector produced for
/// empty text, which has cosine 0 with everything.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Normalizes `values` to unit length (zero stays zero).
    pub fn from_raw(mut values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }

    /// Cosine similarity; both vectors are unit length so this is the dot
    /// product, clamped to [-1, 1].
    pub fn cosine(&self, other: &Self) -> f64 {
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        dot.clamp(-1.0, 1.0)
    }
}

pub trait Embedder: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;

    fn embed_batch(&self, texts: &[String], mode: ExecMode) -> Result<Vec<EmbeddingVector>, EmbedError> {
        mode.map(texts, |t| self.embed(t)).into_iter().collect()
    }
}

/// Deterministic offline embedder: character 3-5-grams of the lowercased,
/// whitespace-collapsed text, sublinear term weights, signed feature hashing
/// into a fixed number of buckets, unit-normalized.
#[derive(Debug, Clone)]
pub struct HashedNgramEmbedder {
    dim: usize,
    seed: u64,
}

impl Default for HashedNgramEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIM, DEFAULT_EMBED_SEED)
    }
}

impl HashedNgramEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, seed }
    }
}

impl Embedder for HashedNgramEmbedder {
    fn name(&self) -> &str {
        "hashed-ngram"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let clean = text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ");
        let mut tf: HashMap<String, u32> = HashMap::new();
        for g in char_ngrams(&clean, 3..=5) {
            *tf.entry(g).or_insert(0) += 1;
        }
        let mut v = vec![0.0; self.dim];
        for (gram, count) in &tf {
            let h = hash64(self.seed, gram.as_bytes());
            let idx = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[idx] += sign * (1.0 + f64::from(*count).ln());
        }
        Ok(EmbeddingVector::from_raw(v))
    }
}

#[derive(Deserialize)]
struct FixtureFile {
    dim: usize,
    vectors: Vec<FixtureEntry>,
}

#[derive(Deserialize)]
struct FixtureEntry {
    text: String,
    values: Vec<f64>,
}

/// Precomputed vectors for specific texts, falling back to another embedder
/// for everything else. Vectors shorter than `dim` are zero-padded.
pub struct FixtureEmbedder {
    dim: usize,
    table: HashMap<String, EmbeddingVector>,
    fallback: Arc<dyn Embedder>,
}

impl FixtureEmbedder {
    pub fn new(dim: usize, fallback: Arc<dyn Embedder>) -> Self {
        Self { dim, table: HashMap::new(), fallback }
    }

    pub fn insert(&mut self, text: impl Into<String>, mut values: Vec<f64>) -> Result<(), EmbedError> {
        if values.len() > self.dim {
            return Err(EmbedError::Fixture(format!("vector has {} values, dimension is {}", values.len(), self.dim)));
        }
        values.resize(self.dim, 0.0);
        self.table.insert(text.into(), EmbeddingVector::from_raw(values));
        Ok(())
    }

    pub fn from_json(json: &str, fallback: Arc<dyn Embedder>) -> Result<Self, EmbedError> {
        let file: FixtureFile = serde_json::from_str(json).map_err(|e| EmbedError::Fixture(e.to_string()))?;
        if file.dim != fallback.dim() {
            return Err(EmbedError::Fixture(format!(
                "fixture dimension {} does not match fallback dimension {}",
                file.dim,
                fallback.dim()
            )));
        }
        let mut emb = Self::new(file.dim, fallback);
        for e in file.vectors {
            emb.insert(e.text, e.values)?;
        }
        Ok(emb)
    }

    pub fn load(path: &Path, fallback: Arc<dyn Embedder>) -> Result<Self, EmbedError> {
        let json =
            std::fs::read_to_string(path).map_err(|e| EmbedError::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_json(&json, fallback)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl Embedder for FixtureEmbedder {
    fn name(&self) -> &str {
        "fixture"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        match self.table.get(text) {
            Some(v) => Ok(v.clone()),
            None => self.fallback.embed(text),
        }
    }
}

/// Embeddings from an external service speaking the common
/// `{"model", "input"} -> {"data": [{"embedding": [...]}]}` protocol.
pub struct HttpEmbedder {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    dim: usize,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        dim: usize,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        Self { endpoint: endpoint.into(), model: model.into(), api_key, dim, agent }
    }
}

impl Embedder for HttpEmbedder {
    fn name(&self) -> &str {
        "http"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let body = serde_json::json!({ "model": self.model, "input": [text] }).to_string();
        let mut req = self.agent.post(&self.endpoint).header("content-type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("authorization", &format!("Bearer {key}"));
        }
        let fail = |e: String| EmbedError::EmbedderFailure(e);
        let mut resp = req.send(body.as_bytes()).map_err(|e| fail(e.to_string()))?;
        let text = resp.body_mut().read_to_string().map_err(|e| fail(e.to_string()))?;
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| fail(e.to_string()))?;
        let values: Vec<f64> = v["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| fail("response has no data[0].embedding".into()))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| fail("non-numeric embedding value".into())))
            .collect::<Result<_, _>>()?;
        if values.len() != self.dim {
            return Err(fail(format!("expected {} dimensions, got {}", self.dim, values.len())));
        }
        Ok(EmbeddingVector::from_raw(values))
    }
}
