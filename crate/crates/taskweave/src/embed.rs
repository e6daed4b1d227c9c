//! Embedding providers: configuration, a remote HTTP provider, and a
//! persistent cache wrapper.
//!
//! The deterministic mock provider lives in the core crate; this module
//! adds provider selection and everything that touches the network or the
//! filesystem. The cache is keyed by (provider id, text hash) since the
//! same task-type strings are queried on every search step.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use taskweave_core::embedding::{Embedder, EmbeddingError, EmbeddingVector, HashEmbedder};
use taskweave_core::hash::{fnv1a, hex16};

use crate::jsonl;

fn default_dim() -> usize {
    384
}

/// Provider selection, as it appears in config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "lowercase")]
pub enum EmbeddingProviderConfig {
    /// Hash-seeded deterministic vectors; the offline default.
    Mock {
        #[serde(default = "default_dim")]
        dim: usize,
    },
    /// OpenAI-style /embeddings endpoint.
    Http {
        endpoint: String,
        model_name: String,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
        #[serde(default = "default_http_timeout")]
        timeout_ms: u64,
    },
}

fn default_http_timeout() -> u64 {
    60_000
}

impl Default for EmbeddingProviderConfig {
    fn default() -> Self {
        EmbeddingProviderConfig::Mock { dim: default_dim() }
    }
}

impl EmbeddingProviderConfig {
    pub fn build(&self) -> Arc<dyn Embedder> {
        match self {
            EmbeddingProviderConfig::Mock { dim } => Arc::new(HashEmbedder::new(*dim)),
            EmbeddingProviderConfig::Http {
                endpoint,
                model_name,
                dim,
                api_key_env,
                timeout_ms,
            } => Arc::new(HttpEmbedder {
                endpoint: endpoint.clone(),
                model_name: model_name.clone(),
                provider_id: format!("http-{model_name}"),
                dim: *dim,
                api_key_env: api_key_env.clone(),
                timeout_ms: *timeout_ms,
            }),
        }
    }
}

/// Remote embedding provider speaking the OpenAI /embeddings wire format.
pub struct HttpEmbedder {
    endpoint: String,
    model_name: String,
    provider_id: String,
    dim: usize,
    api_key_env: Option<String>,
    timeout_ms: u64,
}

impl Embedder for HttpEmbedder {
    fn provider_id(&self) -> &str {
        &self.provider_id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        if text.trim().is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(self.timeout_ms))
            .build();
        let mut call = agent
            .post(&self.endpoint)
            .set("Content-Type", "application/json");
        if let Some(var) = &self.api_key_env {
            if let Ok(key) = std::env::var(var) {
                call = call.set("Authorization", &format!("Bearer {key}"));
            }
        }
        let body = json!({"model": self.model_name, "input": [text]});
        let response = call
            .send_string(&body.to_string())
            .map_err(|e| EmbeddingError::Provider(e.to_string()))?
            .into_string()
            .map_err(|e| EmbeddingError::Provider(e.to_string()))?;
        let value: serde_json::Value =
            serde_json::from_str(&response).map_err(|e| EmbeddingError::Provider(e.to_string()))?;
        let values: Vec<f32> = value["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| EmbeddingError::Provider("missing data[0].embedding".to_string()))?
            .iter()
            .map(|v| v.as_f64().unwrap_or(0.0) as f32)
            .collect();
        EmbeddingVector::new(values, self.provider_id.clone())
    }
}

/// A cache line as persisted on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheRecord {
    key: String,
    values: Vec<f32>,
}

/// Read-through cache over any embedder. Concurrent readers, serialized
/// writes; persists as JSONL beside the database it serves.
pub struct CachingEmbedder {
    inner: Arc<dyn Embedder>,
    cache: RwLock<BTreeMap<String, Vec<f32>>>,
}

impl CachingEmbedder {
    pub fn new(inner: Arc<dyn Embedder>) -> Self {
        CachingEmbedder {
            inner,
            cache: RwLock::new(BTreeMap::new()),
        }
    }

    fn key(&self, text: &str) -> String {
        format!(
            "{}:{}",
            self.inner.provider_id(),
            hex16(fnv1a(text.as_bytes()))
        )
    }

    pub fn len(&self) -> usize {
        self.cache.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Load previously persisted entries; foreign-provider keys are
    /// ignored rather than trusted.
    pub fn load(&self, path: impl AsRef<Path>) -> Result<usize, crate::error::PipelineError> {
        let records: Vec<CacheRecord> = jsonl::read_jsonl(path)?;
        let prefix = format!("{}:", self.inner.provider_id());
        let mut cache = self.cache.write().unwrap();
        let mut loaded = 0;
        for record in records {
            if record.key.starts_with(&prefix) {
                cache.insert(record.key, record.values);
                loaded += 1;
            }
        }
        Ok(loaded)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), crate::error::PipelineError> {
        let cache = self.cache.read().unwrap();
        let records: Vec<CacheRecord> = cache
            .iter()
            .map(|(key, values)| CacheRecord {
                key: key.clone(),
                values: values.clone(),
            })
            .collect();
        jsonl::write_jsonl(path, &records)
    }
}

impl Embedder for CachingEmbedder {
    fn provider_id(&self) -> &str {
        self.inner.provider_id()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        let key = self.key(text);
        if let Some(values) = self.cache.read().unwrap().get(&key) {
            return EmbeddingVector::new(values.clone(), self.inner.provider_id().to_string());
        }
        let vector = self.inner.embed(text)?;
        self.cache
            .write()
            .unwrap()
            .insert(key, vector.values().to_vec());
        Ok(vector)
    }
}
