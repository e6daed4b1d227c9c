//! Embedding vectors, cosine similarity, and exhaustive nearest-neighbor
//! retrieval.
//!
//! Retrieval here is exact linear scan. The databases this pipeline builds
//! top out at thousands of task types and tens of thousands of
//! constraints, so exactness is cheap and keeps the search deterministic.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::hash::fnv1a;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingError {
    EmptyText,
    ZeroVector,
    EmptyIndex,
    DimensionMismatch { left: usize, right: usize },
    ProviderMismatch { left: String, right: String },
    Provider(String),
}

impl fmt::Display for EmbeddingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmbeddingError::EmptyText => f.write_str("cannot embed empty text"),
            EmbeddingError::ZeroVector => f.write_str("zero vector cannot be normalized"),
            EmbeddingError::EmptyIndex => f.write_str("nearest-neighbor index is empty"),
            EmbeddingError::DimensionMismatch { left, right } => {
                write!(f, "dimension mismatch: {left} vs {right}")
            }
            EmbeddingError::ProviderMismatch { left, right } => {
                write!(f, "provider mismatch: `{left}` vs `{right}`")
            }
            EmbeddingError::Provider(msg) => write!(f, "embedding provider error: {msg}"),
        }
    }
}

impl core::error::Error for EmbeddingError {}

/// A unit-normalized embedding. Comparisons are only defined between
/// vectors of the same provider and dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f32>,
    dim: usize,
    provider_id: String,
}

impl EmbeddingVector {
    /// Normalize and wrap raw values. Errors on the zero vector.
    pub fn new(values: Vec<f32>, provider_id: impl Into<String>) -> Result<Self, EmbeddingError> {
        let norm_sq: f64 = values.iter().map(|&v| (v as f64) * (v as f64)).sum();
        if norm_sq == 0.0 || !norm_sq.is_finite() {
            return Err(EmbeddingError::ZeroVector);
        }
        let inv = 1.0 / libm::sqrt(norm_sq);
        let values: Vec<f32> = values.iter().map(|&v| ((v as f64) * inv) as f32).collect();
        let dim = values.len();
        Ok(EmbeddingVector {
            values,
            dim,
            provider_id: provider_id.into(),
        })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.values.iter().map(|&v| (v as f64) * (v as f64)).sum())
    }
}

fn check_comparable(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<(), EmbeddingError> {
    if a.provider_id != b.provider_id {
        return Err(EmbeddingError::ProviderMismatch {
            left: a.provider_id.clone(),
            right: b.provider_id.clone(),
        });
    }
    if a.dim != b.dim {
        return Err(EmbeddingError::DimensionMismatch {
            left: a.dim,
            right: b.dim,
        });
    }
    Ok(())
}

/// Cosine similarity in [-1, 1]. Accumulates in f64 so that
/// `cosine(v, v) = 1` holds to 1e-6 even for large dimensions.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    check_comparable(a, b)?;
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.values.iter().zip(&b.values) {
        dot += (x as f64) * (y as f64);
        na += (x as f64) * (x as f64);
        nb += (y as f64) * (y as f64);
    }
    Ok((dot / libm::sqrt(na * nb)).clamp(-1.0, 1.0))
}

/// One retrieval hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedMatch {
    pub id: String,
    pub score: f64,
}

/// Exhaustive top-n scan: descending cosine, ties broken by ascending id.
pub fn nearest<'a, I>(
    query: &EmbeddingVector,
    index: I,
    top_n: usize,
) -> Result<Vec<RankedMatch>, EmbeddingError>
where
    I: IntoIterator<Item = (&'a str, &'a EmbeddingVector)>,
{
    let mut scored: Vec<RankedMatch> = Vec::new();
    for (id, vector) in index {
        let score = cosine(query, vector)?;
        scored.push(RankedMatch {
            id: id.to_string(),
            score,
        });
    }
    if scored.is_empty() {
        return Err(EmbeddingError::EmptyIndex);
    }
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    scored.truncate(top_n);
    Ok(scored)
}

/// A text embedding provider. Implementations must be deterministic for
/// retrieval (and therefore the search) to be reproducible.
pub trait Embedder: Send + Sync {
    fn provider_id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError>;
}

/// Deterministic offline provider: each text hashes to a seed that drives
/// a Gaussian unit vector. Distinct texts come out near-orthogonal in high
/// dimensions, which is what retrieval and diversity tests need.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    provider_id: String,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 2, "HashEmbedder needs dim >= 2");
        HashEmbedder {
            dim,
            provider_id: format!("hash-{dim}"),
        }
    }
}

impl Embedder for HashEmbedder {
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
        let mut rng =
            SplitMix64::new(fnv1a(text.as_bytes()) ^ (self.dim as u64).wrapping_mul(0x9e37_79b9));
        let mut values = Vec::with_capacity(self.dim);
        while values.len() < self.dim {
            // Box-Muller transform; u1 is kept strictly positive.
            let u1 = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
            let u1 = if u1 <= 0.0 { f64::MIN_POSITIVE } else { u1 };
            let u2 = rng.next_f64();
            let radius = libm::sqrt(-2.0 * libm::log(u1));
            let angle = 2.0 * core::f64::consts::PI * u2;
            values.push((radius * libm::cos(angle)) as f32);
            if values.len() < self.dim {
                values.push((radius * libm::sin(angle)) as f32);
            }
        }
        EmbeddingVector::new(values, self.provider_id.clone())
    }
}
