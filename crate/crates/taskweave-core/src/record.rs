//! Final dataset records.

use alloc::collections::BTreeMap;
use alloc::string::String;
use core::fmt;

use serde::{Deserialize, Serialize};

/// The five response-quality dimensions, in canonical order.
pub const SCORE_DIMENSIONS: [&str; 5] = [
    "general",
    "helpfulness",
    "instruction_following",
    "uncertainty",
    "truthfulness",
];

#[derive(Debug, Clone, PartialEq)]
pub enum RecordError {
    MissingDimension(String),
    ScoreOutOfRange { dimension: String, score: u8 },
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecordError::MissingDimension(d) => write!(f, "missing score dimension `{d}`"),
            RecordError::ScoreOutOfRange { dimension, score } => {
                write!(f, "score {score} for `{dimension}` outside 1..=5")
            }
        }
    }
}

impl core::error::Error for RecordError {}

/// Where a record came from: the model that produced the kept response,
/// and the search state (key + hop) its instruction was generated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_id: String,
    pub seed_state_key: String,
    pub hop: u32,
}

/// One finished instruction-response pair with its five dimension scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftRecord {
    pub instruction: String,
    pub response: String,
    pub scores: BTreeMap<String, u8>,
    pub provenance: Provenance,
}

impl SftRecord {
    /// All five dimensions present, each in 1..=5.
    pub fn validate(&self) -> Result<(), RecordError> {
        for dim in SCORE_DIMENSIONS {
            match self.scores.get(dim) {
                None => return Err(RecordError::MissingDimension(dim.into())),
                Some(&s) if !(1..=5).contains(&s) => {
                    return Err(RecordError::ScoreOutOfRange {
                        dimension: dim.into(),
                        score: s,
                    })
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    pub fn mean_score(&self) -> f64 {
        let sum: u32 = SCORE_DIMENSIONS
            .iter()
            .filter_map(|d| self.scores.get(*d))
            .map(|&s| s as u32)
            .sum();
        sum as f64 / SCORE_DIMENSIONS.len() as f64
    }
}
