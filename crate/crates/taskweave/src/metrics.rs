//! Instruction-batch diagnostics: per-hop diversity (core) and the
//! LLM-judged on-task ratio.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use taskweave_core::diversity::{diversity, DiversityReport, MetricsError};
use taskweave_core::embedding::Embedder;

use crate::error::GatewayError;
use crate::gateway::extract::{extract_json, parse_yes_no};
use crate::gateway::template::{names, TemplateRegistry};
use crate::gateway::Gateway;

/// One instruction to diagnose: its text and the hop it came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricInput {
    pub text: String,
    pub hop: u32,
}

/// Per-hop on-task tallies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopOnTask {
    pub hop: u32,
    pub on_task: usize,
    pub total: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnTaskVerdict {
    pub index: usize,
    pub hop: u32,
    pub on_task: bool,
    pub reason: String,
    /// Set when the judge output was unparseable (counted off-task).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnTaskReport {
    pub hops: Vec<HopOnTask>,
    pub verdicts: Vec<OnTaskVerdict>,
    pub overall_ratio: f64,
}

/// Compute the per-hop diversity report for a batch.
pub fn diversity_report(
    inputs: &[MetricInput],
    embedder: &dyn Embedder,
) -> Result<DiversityReport, MetricsError> {
    let texts: Vec<String> = inputs.iter().map(|i| i.text.clone()).collect();
    let hops: Vec<u32> = inputs.iter().map(|i| i.hop).collect();
    diversity(&texts, &hops, embedder)
}

/// Judge every instruction against the seed task description with the
/// binary on-task prompt. Unparseable judge output counts as off-task and
/// is flagged, never fatal.
pub fn on_task_ratio(
    inputs: &[MetricInput],
    seed_task_description: &str,
    gateway: &Gateway,
    templates: &TemplateRegistry,
    judge_backend_id: &str,
) -> Result<OnTaskReport, GatewayError> {
    let mut verdicts = Vec::with_capacity(inputs.len());
    for (index, input) in inputs.iter().enumerate() {
        let vars: BTreeMap<String, String> = [
            ("seed_task".to_string(), seed_task_description.to_string()),
            ("candidate".to_string(), input.text.clone()),
        ]
        .into_iter()
        .collect();
        let prompt = templates.render(names::ON_TASK_JUDGE, &vars)?;
        let raw = gateway.complete(judge_backend_id, names::ON_TASK_JUDGE, &prompt)?;
        let parsed = extract_json(&raw)
            .ok()
            .and_then(|v| v.get("on_task").and_then(parse_yes_no).map(|b| (b, v)));
        let verdict = match parsed {
            Some((on_task, value)) => OnTaskVerdict {
                index,
                hop: input.hop,
                on_task,
                reason: value
                    .get("reason")
                    .and_then(|r| r.as_str())
                    .unwrap_or_default()
                    .to_string(),
                flagged: false,
            },
            None => OnTaskVerdict {
                index,
                hop: input.hop,
                on_task: false,
                reason: "judge output unparseable".to_string(),
                flagged: true,
            },
        };
        verdicts.push(verdict);
    }

    let mut tallies: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for verdict in &verdicts {
        let entry = tallies.entry(verdict.hop).or_insert((0, 0));
        entry.1 += 1;
        if verdict.on_task {
            entry.0 += 1;
        }
    }
    let hops: Vec<HopOnTask> = tallies
        .into_iter()
        .map(|(hop, (on_task, total))| HopOnTask {
            hop,
            on_task,
            total,
            ratio: on_task as f64 / total as f64,
        })
        .collect();
    let total: usize = hops.iter().map(|h| h.total).sum();
    let on: usize = hops.iter().map(|h| h.on_task).sum();
    Ok(OnTaskReport {
        hops,
        verdicts,
        overall_ratio: if total == 0 {
            0.0
        } else {
            on as f64 / total as f64
        },
    })
}
