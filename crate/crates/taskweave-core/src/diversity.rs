//! Pairwise-embedding diversity, reported per hop.
//!
//! Diversity of a pair is `1 - cosine(embed(a), embed(b))`, so values live
//! in [0, 2]: identical texts score 0, orthogonal embeddings score 1.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine, Embedder, EmbeddingError};

#[derive(Debug, Clone, PartialEq)]
pub enum MetricsError {
    /// A reported hop had fewer than two instructions; no pairs exist.
    TooFewInstructions {
        hop: u32,
        count: usize,
    },
    /// instructions and hop_labels differ in length.
    LengthMismatch {
        instructions: usize,
        labels: usize,
    },
    Embedding(EmbeddingError),
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::TooFewInstructions { hop, count } => {
                write!(
                    f,
                    "hop {hop} has {count} instruction(s); need at least 2 for pairwise diversity"
                )
            }
            MetricsError::LengthMismatch {
                instructions,
                labels,
            } => {
                write!(f, "{instructions} instructions but {labels} hop labels")
            }
            MetricsError::Embedding(e) => write!(f, "embedding failure: {e}"),
        }
    }
}

impl core::error::Error for MetricsError {}

impl From<EmbeddingError> for MetricsError {
    fn from(e: EmbeddingError) -> Self {
        MetricsError::Embedding(e)
    }
}

/// Diversity values for one hop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopDiversity {
    pub hop: u32,
    pub values: Vec<f64>,
    pub mean: f64,
    pub pair_count: usize,
}

/// A hop that could not be reported: fewer than two instructions means no
/// pairs exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedHop {
    pub hop: u32,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub hops: Vec<HopDiversity>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<SkippedHop>,
}

impl DiversityReport {
    pub fn hop(&self, hop: u32) -> Option<&HopDiversity> {
        self.hops.iter().find(|h| h.hop == hop)
    }
}

/// All-pairs diversity within each hop group. Hops with fewer than two
/// instructions have no pairs; they are listed as skipped, and the whole
/// call errors only when no hop is reportable at all.
pub fn diversity(
    instructions: &[String],
    hop_labels: &[u32],
    embedder: &dyn Embedder,
) -> Result<DiversityReport, MetricsError> {
    if instructions.len() != hop_labels.len() {
        return Err(MetricsError::LengthMismatch {
            instructions: instructions.len(),
            labels: hop_labels.len(),
        });
    }

    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (idx, &hop) in hop_labels.iter().enumerate() {
        groups.entry(hop).or_default().push(idx);
    }
    let skipped: Vec<SkippedHop> = groups
        .iter()
        .filter(|(_, members)| members.len() < 2)
        .map(|(&hop, members)| SkippedHop {
            hop,
            count: members.len(),
        })
        .collect();
    groups.retain(|_, members| members.len() >= 2);
    if groups.is_empty() {
        let first = skipped.first();
        return Err(MetricsError::TooFewInstructions {
            hop: first.map(|s| s.hop).unwrap_or(0),
            count: first.map(|s| s.count).unwrap_or(0),
        });
    }

    // Each text embedded once; under-populated hops never embed.
    let mut embeddings: BTreeMap<usize, crate::embedding::EmbeddingVector> = BTreeMap::new();
    for members in groups.values() {
        for &idx in members {
            embeddings.insert(idx, embedder.embed(&instructions[idx])?);
        }
    }

    let mut hops = Vec::with_capacity(groups.len());
    for (hop, members) in groups {
        let mut values = Vec::with_capacity(members.len() * (members.len() - 1) / 2);
        for i in 0..members.len() {
            for j in (i + 1)..members.len() {
                let sim = cosine(&embeddings[&members[i]], &embeddings[&members[j]])?;
                values.push(1.0 - sim);
            }
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        hops.push(HopDiversity {
            hop,
            pair_count: values.len(),
            mean,
            values,
        });
    }

    Ok(DiversityReport { hops, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashEmbedder;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn identical_texts_have_zero_diversity() {
        let embedder = HashEmbedder::new(64);
        let texts = vec!["same text".to_string(); 4];
        let hops = vec![1u32; 4];
        let report = diversity(&texts, &hops, &embedder).unwrap();
        let hop = report.hop(1).unwrap();
        assert_eq!(hop.pair_count, 6); // C(4,2)
        assert!(hop.mean.abs() < 1e-6);
    }

    #[test]
    fn distinct_texts_near_one_in_high_dim() {
        let embedder = HashEmbedder::new(384);
        let texts: Vec<String> = (0..6)
            .map(|i| alloc::format!("instruction variant {i}"))
            .collect();
        let hops = vec![2u32; 6];
        let report = diversity(&texts, &hops, &embedder).unwrap();
        let hop = report.hop(2).unwrap();
        assert!((hop.mean - 1.0).abs() < 0.2, "mean {}", hop.mean);
        assert!(hop.values.iter().all(|v| (0.0..=2.0).contains(v)));
    }

    #[test]
    fn duplicate_injection_strictly_lowers_mean() {
        let embedder = HashEmbedder::new(128);
        let mut texts: Vec<String> = (0..5).map(|i| alloc::format!("unique text {i}")).collect();
        let hops = vec![1u32; 5];
        let before = diversity(&texts, &hops, &embedder)
            .unwrap()
            .hop(1)
            .unwrap()
            .mean;
        texts[4] = texts[0].clone();
        let after = diversity(&texts, &hops, &embedder)
            .unwrap()
            .hop(1)
            .unwrap()
            .mean;
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn under_populated_hop_is_skipped_not_fatal() {
        let embedder = HashEmbedder::new(32);
        let texts = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let hops = vec![1u32, 1, 2];
        let report = diversity(&texts, &hops, &embedder).unwrap();
        assert_eq!(report.hops.len(), 1);
        assert_eq!(report.hops[0].hop, 1);
        assert_eq!(report.skipped, vec![SkippedHop { hop: 2, count: 1 }]);
    }

    #[test]
    fn no_reportable_hop_is_an_error() {
        let embedder = HashEmbedder::new(32);
        let texts = vec!["a".to_string(), "b".to_string()];
        let hops = vec![1u32, 2];
        assert!(matches!(
            diversity(&texts, &hops, &embedder),
            Err(MetricsError::TooFewInstructions { hop: 1, count: 1 })
        ));
    }

    #[test]
    fn order_invariant_within_hop() {
        let embedder = HashEmbedder::new(64);
        let texts: Vec<String> = (0..5).map(|i| alloc::format!("text {i}")).collect();
        let hops = vec![0u32; 5];
        let forward = diversity(&texts, &hops, &embedder)
            .unwrap()
            .hop(0)
            .unwrap()
            .mean;
        let mut reversed = texts.clone();
        reversed.reverse();
        let backward = diversity(&reversed, &hops, &embedder)
            .unwrap()
            .hop(0)
            .unwrap()
            .mean;
        assert!((forward - backward).abs() < 1e-12);
    }
}
