//! Stage 1: decompose a natural-language instruction into structured
//! (task type, base query, constraints) triplets via the decompose prompt.
//!
//! Malformed model responses are retried by re-sending the same prompt up
//! to the retry limit; persistent failures surface as `DecomposeError`
//! (batch ingestion logs and skips them instead of aborting).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use taskweave_core::constraint::ConstraintRecord;
use taskweave_core::state::{DecomposedTask, DecompositionResult, InstructionState, SeedStates};

use crate::error::DecomposeError;
use crate::gateway::extract::{extract_json, parse_yes_no};
use crate::gateway::template::{names, TemplateRegistry};
use crate::gateway::Gateway;

/// Input record for batch decomposition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawInstruction {
    pub id: String,
    pub instruction: String,
}

/// Batch decomposition outcome: (id, result) successes plus (id, error)
/// skips.
pub type BatchOutcome = (Vec<(String, DecompositionResult)>, Vec<(String, String)>);

pub const DEFAULT_RETRY_LIMIT: u32 = 3;

pub struct Decomposer<'a> {
    pub gateway: &'a Gateway,
    pub templates: &'a TemplateRegistry,
    pub backend_id: String,
    /// Total malformed responses tolerated (the first attempt counts).
    pub retry_limit: u32,
}

impl<'a> Decomposer<'a> {
    pub fn new(
        gateway: &'a Gateway,
        templates: &'a TemplateRegistry,
        backend_id: impl Into<String>,
    ) -> Self {
        Decomposer {
            gateway,
            templates,
            backend_id: backend_id.into(),
            retry_limit: DEFAULT_RETRY_LIMIT,
        }
    }

    pub fn with_retry_limit(mut self, retry_limit: u32) -> Self {
        self.retry_limit = retry_limit;
        self
    }

    /// Decompose one instruction.
    pub fn decompose(&self, instruction: &str) -> Result<DecompositionResult, DecomposeError> {
        if instruction.trim().is_empty() {
            return Err(DecomposeError::EmptyInstruction);
        }
        let vars: BTreeMap<String, String> = [("query".to_string(), instruction.to_string())]
            .into_iter()
            .collect();
        let prompt = self.templates.render(names::DECOMPOSE, &vars)?;

        let attempts = self.retry_limit.max(1);
        let mut last_error = String::new();
        for _ in 0..attempts {
            // Transport failures surface directly; the gateway already
            // retried them. Only malformed responses burn attempts here.
            let raw = self
                .gateway
                .complete(&self.backend_id, names::DECOMPOSE, &prompt)?;
            match parse_decomposition(&raw, instruction) {
                Ok(result) => {
                    result.validate().map_err(|e| DecomposeError::Failed {
                        attempts: 1,
                        last_error: e.to_string(),
                    })?;
                    return Ok(result);
                }
                Err(message) => last_error = message,
            }
        }
        Err(DecomposeError::Failed {
            attempts,
            last_error,
        })
    }

    /// Decompose an augmentation seed, which must yield exactly one task.
    pub fn decompose_seed(&self, instruction: &str) -> Result<InstructionState, DecomposeError> {
        let result = self.decompose(instruction)?;
        if !result.complex {
            return Err(DecomposeError::SeedSimple);
        }
        if result.tasks.len() != 1 {
            return Err(DecomposeError::SeedNotSingleTask(result.tasks.len()));
        }
        let SeedStates { mut states, .. } =
            result.to_states().map_err(|e| DecomposeError::Failed {
                attempts: 1,
                last_error: e.to_string(),
            })?;
        Ok(states.remove(0))
    }

    /// Decompose a corpus, logging and skipping persistent failures.
    /// Returns the successes paired with their ids, plus the failed ids.
    pub fn decompose_batch(&self, records: &[RawInstruction]) -> BatchOutcome {
        let mut ok = Vec::new();
        let mut failed = Vec::new();
        for record in records {
            match self.decompose(&record.instruction) {
                Ok(result) => ok.push((record.id.clone(), result)),
                Err(e) => failed.push((record.id.clone(), e.to_string())),
            }
        }
        (ok, failed)
    }
}

/// Map the decompose prompt's JSON shape onto `DecompositionResult`.
/// Tolerates the spellings real models produce: "Complex" as string or
/// bool, "Language" as string or list, category labels with suffixes.
fn parse_decomposition(raw: &str, original: &str) -> Result<DecompositionResult, String> {
    let value = extract_json(raw).map_err(|e| e.to_string())?;
    let obj = value
        .as_object()
        .ok_or("decomposition is not a JSON object")?;

    let complex = obj
        .get("Complex")
        .and_then(parse_yes_no_or_bool)
        .ok_or("missing or unreadable `Complex` field")?;
    if !complex {
        return Ok(DecompositionResult::simple(original));
    }

    let language = match obj.get("Language") {
        Some(Value::String(s)) => vec![s.clone()],
        Some(Value::Array(items)) => items
            .iter()
            .filter_map(|v| v.as_str().map(str::to_string))
            .collect(),
        _ => Vec::new(),
    };

    let tasks_value = obj
        .get("Tasks")
        .and_then(|t| t.as_array())
        .ok_or("complex result without `Tasks` array")?;
    let mut tasks = Vec::with_capacity(tasks_value.len());
    for task in tasks_value {
        let task_type = task
            .get("Task Type")
            .and_then(|v| v.as_str())
            .unwrap_or("Unspecified")
            .to_string();
        let base_query = task
            .get("Basic Query")
            .and_then(|v| v.as_str())
            .ok_or("task without `Basic Query`")?
            .to_string();
        let mut constraints = Vec::new();
        if let Some(list) = task.get("Constraints").and_then(|v| v.as_array()) {
            for item in list {
                let text = match item.get("constraint").and_then(|v| v.as_str()) {
                    Some(text) if !text.trim().is_empty() => text,
                    // Empty or missing constraint text: drop the entry.
                    _ => continue,
                };
                let label = item.get("category").and_then(|v| v.as_str()).unwrap_or("");
                let mut record =
                    ConstraintRecord::from_label(text, label).map_err(|e| e.to_string())?;
                if let Some(simplified) = item.get("simplified query").and_then(|v| v.as_str()) {
                    record = record.with_simplified_query(simplified);
                }
                constraints.push(record);
            }
        }
        tasks.push(DecomposedTask {
            task_type,
            base_query,
            constraints,
        });
    }

    Ok(DecompositionResult {
        complex: true,
        language,
        tasks,
        raw: original.to_string(),
    })
}

fn parse_yes_no_or_bool(value: &Value) -> Option<bool> {
    match value {
        Value::Bool(b) => Some(*b),
        Value::String(s) => match s.trim().to_lowercase().as_str() {
            "true" => Some(true),
            "false" => Some(false),
            other => parse_yes_no(&Value::String(other.to_string())),
        },
        _ => None,
    }
}
