//! Stage 6: generate candidate responses from a model pool, score each on
//! five dimensions, keep the best per instruction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use taskweave_core::hash::fnv1a;
use taskweave_core::record::{Provenance, SftRecord, SCORE_DIMENSIONS};

use crate::error::{GatewayError, ResponseError};
use crate::gateway::extract::{extract_json, parse_score_response};
use crate::gateway::template::{names, TemplateRegistry};
use crate::gateway::Gateway;

/// One pool model's raw answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub model_id: String,
    pub response_text: String,
    /// Position of the producing model in the pool; first tie-break key.
    pub pool_index: usize,
}

/// A candidate with its five dimension scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredResponse {
    pub model_id: String,
    pub response_text: String,
    pub dimension_scores: BTreeMap<String, u8>,
    pub mean_score: f64,
    pub reasons: BTreeMap<String, String>,
    pub pool_index: usize,
    /// Set when any dimension was unparseable twice and defaulted to 1.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub flagged: bool,
}

/// Fan an instruction out to every pool backend.
pub struct ResponseGenerator<'a> {
    pub gateway: &'a Gateway,
    /// Backend ids in pool order (the tie-break order).
    pub pool: Vec<String>,
}

impl<'a> ResponseGenerator<'a> {
    pub fn new(gateway: &'a Gateway, pool: Vec<String>) -> Self {
        ResponseGenerator { gateway, pool }
    }

    /// One candidate per pool member that responds; individual failures
    /// shrink the list, but zero candidates is an error, never silent.
    pub fn generate_candidates(&self, instruction: &str) -> Result<Vec<Candidate>, ResponseError> {
        if self.pool.is_empty() {
            return Err(ResponseError::AllModelsFailed {
                attempted: 0,
                last_error: "response pool is empty".to_string(),
            });
        }
        let mut candidates = Vec::new();
        let mut last_error = String::new();
        for (pool_index, backend_id) in self.pool.iter().enumerate() {
            match self
                .gateway
                .complete(backend_id, names::GENERATE, instruction)
            {
                Ok(response_text) => candidates.push(Candidate {
                    model_id: self
                        .gateway
                        .config(backend_id)
                        .map(|c| c.model_name.clone())
                        .unwrap_or_else(|_| backend_id.clone()),
                    response_text,
                    pool_index,
                }),
                Err(e) => last_error = format!("{backend_id}: {e}"),
            }
        }
        if candidates.is_empty() {
            return Err(ResponseError::AllModelsFailed {
                attempted: self.pool.len(),
                last_error,
            });
        }
        Ok(candidates)
    }
}

/// Score candidates with a judge backend, one call per dimension.
pub struct ResponseScorer<'a> {
    pub gateway: &'a Gateway,
    pub templates: &'a TemplateRegistry,
    pub judge_backend_id: String,
}

impl<'a> ResponseScorer<'a> {
    pub fn new(
        gateway: &'a Gateway,
        templates: &'a TemplateRegistry,
        judge_backend_id: impl Into<String>,
    ) -> Self {
        ResponseScorer {
            gateway,
            templates,
            judge_backend_id: judge_backend_id.into(),
        }
    }

    /// Five judge calls; an unparseable dimension is retried once, then
    /// scored 1 with the flag set.
    pub fn score_candidate(
        &self,
        system_message: Option<&str>,
        instruction: &str,
        candidate: &Candidate,
    ) -> Result<ScoredResponse, GatewayError> {
        let mut dimension_scores = BTreeMap::new();
        let mut reasons = BTreeMap::new();
        let mut flagged = false;

        for (dimension, template_name) in names::DATA_SCORING {
            let vars: BTreeMap<String, String> = [
                // The "(if any)" slot renders empty when absent.
                (
                    "system_message".to_string(),
                    system_message.unwrap_or_default().to_string(),
                ),
                ("user_query".to_string(), instruction.to_string()),
                (
                    "assistant_output".to_string(),
                    candidate.response_text.clone(),
                ),
            ]
            .into_iter()
            .collect();
            let prompt = self.templates.render(template_name, &vars)?;

            let mut outcome: Option<(u8, String)> = None;
            let mut last_error = String::new();
            for _ in 0..2 {
                let raw = self
                    .gateway
                    .complete(&self.judge_backend_id, template_name, &prompt)?;
                match extract_json(&raw)
                    .map_err(|e| e.to_string())
                    .and_then(|v| parse_score_response(&v))
                {
                    Ok(parsed) => {
                        outcome = Some(parsed);
                        break;
                    }
                    Err(message) => last_error = message,
                }
            }
            let (score, reason) = outcome.unwrap_or_else(|| {
                flagged = true;
                (1, format!("score unparseable after retry: {last_error}"))
            });
            dimension_scores.insert(dimension.to_string(), score);
            reasons.insert(dimension.to_string(), reason);
        }

        let mean_score = dimension_scores.values().map(|&s| s as u32).sum::<u32>() as f64
            / SCORE_DIMENSIONS.len() as f64;
        Ok(ScoredResponse {
            model_id: candidate.model_id.clone(),
            response_text: candidate.response_text.clone(),
            dimension_scores,
            mean_score,
            reasons,
            pool_index: candidate.pool_index,
            flagged,
        })
    }
}

/// The retained response: argmax by mean score, ties broken by pool order
/// (earlier model wins), then by lexicographic response-text hash.
pub fn select_best(candidates: &[ScoredResponse]) -> Result<&ScoredResponse, ResponseError> {
    candidates
        .iter()
        .min_by(|a, b| {
            b.mean_score
                .total_cmp(&a.mean_score)
                .then_with(|| a.pool_index.cmp(&b.pool_index))
                .then_with(|| response_hash(a).cmp(&response_hash(b)))
        })
        .ok_or(ResponseError::EmptyCandidates)
}

fn response_hash(candidate: &ScoredResponse) -> String {
    taskweave_core::hash::hex16(fnv1a(candidate.response_text.as_bytes()))
}

/// Package the winner as the terminal dataset record.
pub fn to_sft_record(
    best: &ScoredResponse,
    instruction: &str,
    seed_state_key: &str,
    hop: u32,
) -> SftRecord {
    SftRecord {
        instruction: instruction.to_string(),
        response: best.response_text.clone(),
        scores: best.dimension_scores.clone(),
        provenance: Provenance {
            model_id: best.model_id.clone(),
            seed_state_key: seed_state_key.to_string(),
            hop,
        },
    }
}
