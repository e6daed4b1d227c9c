//! Stage 4: convert a state back into one natural-language prompt, then
//! critique and refine until every constraint is covered or retries run
//! out.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use taskweave_core::state::InstructionState;

use crate::error::ComposeError;
use crate::gateway::extract::{extract_json, parse_yes_no};
use crate::gateway::template::{format_constraint_list, names, TemplateRegistry};
use crate::gateway::Gateway;

/// Verdict for one constraint from the verify prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintVerdict {
    #[serde(with = "yes_no")]
    pub result: bool,
    pub reason: String,
}

/// serde adapter: the wire format says "yes"/"no".
mod yes_no {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &bool, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(if *value { "yes" } else { "no" })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<bool, D::Error> {
        let raw = String::deserialize(deserializer)?;
        match raw.trim().to_lowercase().as_str() {
            "yes" | "true" => Ok(true),
            "no" | "false" => Ok(false),
            other => Err(serde::de::Error::custom(format!(
                "expected yes/no, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComposeStatus {
    /// Every constraint verified covered.
    Verified,
    /// Retries exhausted; the best attempt is kept.
    BestEffort,
    /// Every attempt was unparseable.
    Failed,
}

/// A composed prompt with its verification trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposedInstruction {
    pub state_key: String,
    pub prompt_text: String,
    pub verification: Vec<ConstraintVerdict>,
    pub attempts: u32,
    pub status: ComposeStatus,
}

pub const DEFAULT_MAX_RETRIES: u32 = 3;

pub struct Composer<'a> {
    pub gateway: &'a Gateway,
    pub templates: &'a TemplateRegistry,
    pub backend_id: String,
}

impl<'a> Composer<'a> {
    pub fn new(
        gateway: &'a Gateway,
        templates: &'a TemplateRegistry,
        backend_id: impl Into<String>,
    ) -> Self {
        Composer {
            gateway,
            templates,
            backend_id: backend_id.into(),
        }
    }

    fn constraint_texts(state: &InstructionState) -> Vec<String> {
        state.constraints.iter().map(|c| c.text.clone()).collect()
    }

    /// One compose (or refine, when a critique exists) call.
    fn compose_once(
        &self,
        state: &InstructionState,
        critique: Option<&str>,
    ) -> Result<String, ComposeError> {
        let mut vars: BTreeMap<String, String> = BTreeMap::new();
        vars.insert("query".to_string(), state.base_query.clone());
        vars.insert(
            "constraints".to_string(),
            format_constraint_list(&Self::constraint_texts(state)),
        );
        let template_name = match critique {
            Some(critique) => {
                vars.insert("critique".to_string(), critique.to_string());
                names::COMPOSE_REFINE
            }
            None => names::COMPOSE,
        };
        let prompt = self.templates.render(template_name, &vars)?;
        let raw = self
            .gateway
            .complete(&self.backend_id, template_name, &prompt)?;
        let value = extract_json(&raw).map_err(|e| ComposeError::ComposeParse(e.to_string()))?;
        value
            .get("Created Prompt")
            .and_then(|v| v.as_str())
            .map(|s| s.to_string())
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| ComposeError::ComposeParse("missing `Created Prompt` field".to_string()))
    }

    /// Initial composition of a state.
    pub fn compose(&self, state: &InstructionState) -> Result<String, ComposeError> {
        self.compose_once(state, None)
    }

    /// Check each constraint against a generated prompt; order-aligned
    /// verdicts. An empty constraint set is vacuously verified without a
    /// model call.
    pub fn verify_composition(
        &self,
        constraints: &[String],
        prompt_text: &str,
    ) -> Result<Vec<ConstraintVerdict>, ComposeError> {
        if constraints.is_empty() {
            return Ok(Vec::new());
        }
        let vars: BTreeMap<String, String> = [
            (
                "constraints".to_string(),
                format_constraint_list(constraints),
            ),
            ("prompt".to_string(), prompt_text.to_string()),
        ]
        .into_iter()
        .collect();
        let prompt = self.templates.render(names::COMPOSE_VERIFY, &vars)?;
        let raw = self
            .gateway
            .complete(&self.backend_id, names::COMPOSE_VERIFY, &prompt)?;
        let value = extract_json(&raw).map_err(|e| ComposeError::VerifyParse(e.to_string()))?;
        let obj = value.as_object().ok_or_else(|| {
            ComposeError::VerifyParse("verification is not a JSON object".to_string())
        })?;
        if obj.len() != constraints.len() {
            return Err(ComposeError::VerifyParse(format!(
                "verdict count {} != constraint count {}",
                obj.len(),
                constraints.len()
            )));
        }
        let mut verdicts = Vec::with_capacity(constraints.len());
        for index in 1..=constraints.len() {
            let entry = obj
                .get(&index.to_string())
                .ok_or_else(|| ComposeError::VerifyParse(format!("missing verdict `{index}`")))?;
            let result = entry.get("result").and_then(parse_yes_no).ok_or_else(|| {
                ComposeError::VerifyParse(format!("verdict `{index}` has no yes/no result"))
            })?;
            let reason = entry
                .get("reason")
                .and_then(|r| r.as_str())
                .unwrap_or_default()
                .to_string();
            verdicts.push(ConstraintVerdict { result, reason });
        }
        Ok(verdicts)
    }

    /// The compose -> verify -> refine loop. Never errors: exhaustion
    /// yields `BestEffort` (most satisfied constraints wins, ties to the
    /// latest attempt) and `Failed` only when every attempt was
    /// unparseable.
    pub fn compose_with_repair(
        &self,
        state: &InstructionState,
        max_retries: u32,
    ) -> ComposedInstruction {
        let constraints = Self::constraint_texts(state);
        let state_key = state.state_key();
        let mut attempts: u32 = 0;
        let mut critique: Option<String> = None;
        let mut best: Option<(usize, String, Vec<ConstraintVerdict>)> = None;

        while attempts <= max_retries {
            attempts += 1;
            let prompt_text = match self.compose_once(state, critique.as_deref()) {
                Ok(text) => text,
                Err(_) => {
                    critique = Some(
                        "The previous attempt did not produce a parseable instruction.".to_string(),
                    );
                    continue;
                }
            };

            match self.verify_composition(&constraints, &prompt_text) {
                Ok(verdicts) => {
                    let satisfied = verdicts.iter().filter(|v| v.result).count();
                    if satisfied == constraints.len() {
                        return ComposedInstruction {
                            state_key,
                            prompt_text,
                            verification: verdicts,
                            attempts,
                            status: ComposeStatus::Verified,
                        };
                    }
                    let missing: Vec<String> = verdicts
                        .iter()
                        .enumerate()
                        .filter(|(_, v)| !v.result)
                        .map(|(i, v)| format!("Constraint {}: {}", i + 1, v.reason))
                        .collect();
                    critique = Some(missing.join("\n"));
                    // Ties go to the latest attempt.
                    if best
                        .as_ref()
                        .map(|(s, _, _)| satisfied >= *s)
                        .unwrap_or(true)
                    {
                        best = Some((satisfied, prompt_text, verdicts));
                    }
                }
                Err(_) => {
                    critique =
                        Some("Constraint coverage could not be verified; regenerate with every constraint stated explicitly.".to_string());
                    if best.is_none() {
                        best = Some((0, prompt_text, Vec::new()));
                    }
                }
            }
        }

        match best {
            Some((_, prompt_text, verification)) => ComposedInstruction {
                state_key,
                prompt_text,
                verification,
                attempts,
                status: ComposeStatus::BestEffort,
            },
            None => ComposedInstruction {
                state_key,
                prompt_text: String::new(),
                verification: Vec::new(),
                attempts,
                status: ComposeStatus::Failed,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::mock::{MockTransport, ScriptedResponse};
    use crate::gateway::BackendConfig;
    use std::sync::Arc;
    use taskweave_core::constraint::{ConstraintCategory, ConstraintRecord};

    fn state(constraints: &[&str]) -> InstructionState {
        let mut s = InstructionState::new("Creative Writing", "Write a travel ad").unwrap();
        for c in constraints {
            s.push_constraint(ConstraintRecord::new(*c, ConstraintCategory::Content).unwrap());
        }
        s
    }

    fn harness(mock: Arc<MockTransport>) -> (Gateway, TemplateRegistry) {
        let mut gateway = Gateway::new();
        gateway.set_sleeper(|_| {});
        gateway
            .register_with_transport(BackendConfig::mock("m"), mock)
            .unwrap();
        (gateway, TemplateRegistry::builtin())
    }

    fn verify_json(results: &[&str]) -> String {
        let mut obj = serde_json::Map::new();
        for (i, r) in results.iter().enumerate() {
            obj.insert(atoi(i + 1), serde_json::json!({"reason": "r", "result": r}));
        }
        serde_json::Value::Object(obj).to_string()
    }

    fn atoi(n: usize) -> String {
        n.to_string()
    }

    #[test]
    fn empty_constraints_verify_without_model_call() {
        let mock = Arc::new(MockTransport::new(false));
        let (gateway, templates) = harness(mock);
        let composer = Composer::new(&gateway, &templates, "m");
        let verdicts = composer.verify_composition(&[], "anything").unwrap();
        assert!(verdicts.is_empty());
        assert_eq!(gateway.request_count("m"), 0);
    }

    #[test]
    fn verdict_count_mismatch_is_parse_error() {
        let mock = Arc::new(MockTransport::new(false));
        mock.push_script(
            names::COMPOSE_VERIFY,
            ScriptedResponse::Text(verify_json(&["yes"])),
        );
        let (gateway, templates) = harness(mock);
        let composer = Composer::new(&gateway, &templates, "m");
        let err = composer
            .verify_composition(&["a".to_string(), "b".to_string()], "prompt")
            .unwrap_err();
        assert!(matches!(err, ComposeError::VerifyParse(_)));
    }

    #[test]
    fn fixture_marking_constraint_missing_maps_through() {
        let mock = Arc::new(MockTransport::new(false));
        mock.push_script(
            names::COMPOSE_VERIFY,
            ScriptedResponse::Text(verify_json(&["yes", "no"])),
        );
        let (gateway, templates) = harness(mock);
        let composer = Composer::new(&gateway, &templates, "m");
        let verdicts = composer
            .verify_composition(&["a".to_string(), "b".to_string()], "prompt")
            .unwrap();
        assert!(verdicts[0].result);
        assert!(!verdicts[1].result);
    }

    fn compose_json(text: &str) -> String {
        serde_json::json!({"Created Prompt": text}).to_string()
    }

    /// Scripts: verifier fails `failures` times, then passes.
    fn scripted_repair(failures: usize, max_retries: u32) -> ComposedInstruction {
        let mock = Arc::new(MockTransport::new(false));
        for i in 0..=(failures as u32).min(max_retries) {
            let label = if i == 0 {
                names::COMPOSE
            } else {
                names::COMPOSE_REFINE
            };
            mock.push_script(
                label,
                ScriptedResponse::Text(compose_json(&format!("attempt {i}"))),
            );
        }
        for i in 0..=(failures as u32).min(max_retries) {
            let verdict = if (i as usize) < failures {
                verify_json(&["yes", "no"])
            } else {
                verify_json(&["yes", "yes"])
            };
            mock.push_script(names::COMPOSE_VERIFY, ScriptedResponse::Text(verdict));
        }
        let (gateway, templates) = harness(mock);
        let composer = Composer::new(&gateway, &templates, "m");
        composer.compose_with_repair(&state(&["c one", "c two"]), max_retries)
    }

    #[test]
    fn repair_loop_attempt_accounting() {
        // Verifier passes immediately.
        let done = scripted_repair(0, 3);
        assert_eq!((done.status, done.attempts), (ComposeStatus::Verified, 1));

        // Fails once, then passes.
        let done = scripted_repair(1, 3);
        assert_eq!((done.status, done.attempts), (ComposeStatus::Verified, 2));

        // Fails twice, then passes.
        let done = scripted_repair(2, 3);
        assert_eq!((done.status, done.attempts), (ComposeStatus::Verified, 3));

        // Always fails: retries exhausted at 1 + max_retries attempts.
        let done = scripted_repair(99, 2);
        assert_eq!((done.status, done.attempts), (ComposeStatus::BestEffort, 3));
    }

    #[test]
    fn failed_only_when_every_attempt_unparseable() {
        let mock = Arc::new(MockTransport::new(false));
        mock.push_script(names::COMPOSE, ScriptedResponse::Text("not json".into()));
        for _ in 0..2 {
            mock.push_script(
                names::COMPOSE_REFINE,
                ScriptedResponse::Text("still not json".into()),
            );
        }
        let (gateway, templates) = harness(mock);
        let composer = Composer::new(&gateway, &templates, "m");
        let done = composer.compose_with_repair(&state(&["c"]), 2);
        assert_eq!((done.status, done.attempts), (ComposeStatus::Failed, 3));
        assert!(done.prompt_text.is_empty());
    }

    #[test]
    fn best_effort_keeps_most_satisfied_attempt() {
        let mock = Arc::new(MockTransport::new(false));
        mock.push_script(
            names::COMPOSE,
            ScriptedResponse::Text(compose_json("two of three")),
        );
        mock.push_script(
            names::COMPOSE_REFINE,
            ScriptedResponse::Text(compose_json("one of three")),
        );
        mock.push_script(
            names::COMPOSE_VERIFY,
            ScriptedResponse::Text(verify_json(&["yes", "yes", "no"])),
        );
        mock.push_script(
            names::COMPOSE_VERIFY,
            ScriptedResponse::Text(verify_json(&["yes", "no", "no"])),
        );
        let (gateway, templates) = harness(mock);
        let composer = Composer::new(&gateway, &templates, "m");
        let done = composer.compose_with_repair(&state(&["a", "b", "c"]), 1);
        assert_eq!(done.status, ComposeStatus::BestEffort);
        assert_eq!(done.prompt_text, "two of three");
        assert_eq!(done.attempts, 2);
    }

    #[test]
    fn no_constraint_state_composes_and_verifies_vacuously() {
        let mock = Arc::new(MockTransport::new(true));
        let (gateway, templates) = harness(mock);
        let composer = Composer::new(&gateway, &templates, "m");
        let done = composer.compose_with_repair(&state(&[]), 3);
        assert_eq!((done.status, done.attempts), (ComposeStatus::Verified, 1));
        assert!(done.prompt_text.contains("Write a travel ad"));
        assert!(done.verification.is_empty());
    }

    #[test]
    fn placeholder_block_flows_to_context_integration() {
        // A state with an Input Placeholder constraint composes to a
        // prompt carrying a line-broken placeholder block, which context
        // integration later fills.
        let mut s = InstructionState::new("Summarization", "Summarize the section notes").unwrap();
        s.push_constraint(
            ConstraintRecord::new(
                "Must work from the provided section summaries",
                ConstraintCategory::InputPlaceholder,
            )
            .unwrap(),
        );

        let composed_prompt = "Summarize the section notes drawing only on the provided material.\n\n[SECTION SUMMARIES]\n{placeholder}\n[END OF SECTION SUMMARIES]\n";
        let mock = Arc::new(MockTransport::new(false));
        mock.push_script(
            names::COMPOSE,
            ScriptedResponse::Text(compose_json(composed_prompt)),
        );
        mock.push_script(
            names::COMPOSE_VERIFY,
            ScriptedResponse::Text(verify_json(&["yes"])),
        );
        let (gateway, templates) = harness(mock);
        let composer = Composer::new(&gateway, &templates, "m");
        let done = composer.compose_with_repair(&s, 1);
        assert_eq!(done.status, ComposeStatus::Verified);
        assert!(done.prompt_text.contains("\n{placeholder}\n"));

        let integrated = crate::validator::integrate_context(
            &done.prompt_text,
            "summary one; summary two",
            "placeholder",
        )
        .unwrap();
        assert!(integrated
            .text
            .contains("[SECTION SUMMARIES]\nsummary one; summary two\n[END OF SECTION SUMMARIES]"));
    }

    #[test]
    fn verdict_serde_uses_yes_no() {
        let verdict = ConstraintVerdict {
            result: true,
            reason: String::new(),
        };
        let json = serde_json::to_string(&verdict).unwrap();
        assert!(json.contains("\"yes\""));
        let back: ConstraintVerdict = serde_json::from_str(&json).unwrap();
        assert!(back.result);
    }
}
