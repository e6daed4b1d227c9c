//! Stage 5: score composed instructions on validity and self-consistency,
//! gate on thresholds, and integrate real-world context into survivors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{GatewayError, ValidateError};
use crate::gateway::extract::{extract_json, parse_score_response};
use crate::gateway::template::{names, TemplateRegistry};
use crate::gateway::Gateway;

/// Both judge scores with reasons; `passed` is the conjunction of the two
/// threshold checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationVerdict {
    pub validity_score: u8,
    pub validity_reason: String,
    pub self_consistency_score: u8,
    pub self_consistency_reason: String,
    pub passed: bool,
    /// Set when a score was unparseable twice and defaulted to 1.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub validity: u8,
    pub self_consistency: u8,
}

impl Default for Thresholds {
    fn default() -> Self {
        // The scoring rubric anchors 4 at "quite good"; configurable.
        Thresholds {
            validity: 4,
            self_consistency: 4,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), String> {
        for (name, value) in [
            ("validity", self.validity),
            ("self_consistency", self.self_consistency),
        ] {
            if !(1..=5).contains(&value) {
                return Err(format!("{name} threshold {value} outside 1..=5"));
            }
        }
        Ok(())
    }
}

/// One scored aspect.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreOutcome {
    pub score: u8,
    pub reason: String,
    pub flagged: bool,
}

pub struct Validator<'a> {
    pub gateway: &'a Gateway,
    pub templates: &'a TemplateRegistry,
    pub backend_id: String,
    pub thresholds: Thresholds,
}

impl<'a> Validator<'a> {
    pub fn new(
        gateway: &'a Gateway,
        templates: &'a TemplateRegistry,
        backend_id: impl Into<String>,
        thresholds: Thresholds,
    ) -> Self {
        Validator {
            gateway,
            templates,
            backend_id: backend_id.into(),
            thresholds,
        }
    }

    /// Score with one retry on unparseable output, then default to 1 with
    /// the flag set (auto-fail rather than retry forever).
    fn score_with(
        &self,
        template_name: &str,
        prompt_text: &str,
    ) -> Result<ScoreOutcome, GatewayError> {
        let vars: BTreeMap<String, String> = [("task_prompt".to_string(), prompt_text.to_string())]
            .into_iter()
            .collect();
        let prompt = self.templates.render(template_name, &vars)?;
        let mut last_error = String::new();
        for _ in 0..2 {
            let raw = self
                .gateway
                .complete(&self.backend_id, template_name, &prompt)?;
            match extract_json(&raw)
                .map_err(|e| e.to_string())
                .and_then(|v| parse_score_response(&v))
            {
                Ok((score, reason)) => {
                    return Ok(ScoreOutcome {
                        score,
                        reason,
                        flagged: false,
                    });
                }
                Err(message) => last_error = message,
            }
        }
        Ok(ScoreOutcome {
            score: 1,
            reason: format!("score unparseable after retry: {last_error}"),
            flagged: true,
        })
    }

    pub fn score_validity(&self, prompt_text: &str) -> Result<ScoreOutcome, GatewayError> {
        self.score_with(names::VALIDITY, prompt_text)
    }

    pub fn score_self_consistency(&self, prompt_text: &str) -> Result<ScoreOutcome, GatewayError> {
        self.score_with(names::SELF_CONSISTENCY, prompt_text)
    }

    /// Score both aspects and apply the thresholds.
    pub fn validate(&self, prompt_text: &str) -> Result<ValidationVerdict, GatewayError> {
        let validity = self.score_validity(prompt_text)?;
        let self_consistency = self.score_self_consistency(prompt_text)?;
        let passed = validity.score >= self.thresholds.validity
            && self_consistency.score >= self.thresholds.self_consistency;
        Ok(ValidationVerdict {
            validity_score: validity.score,
            validity_reason: validity.reason,
            self_consistency_score: self_consistency.score,
            self_consistency_reason: self_consistency.reason,
            passed,
            flagged: validity.flagged || self_consistency.flagged,
        })
    }
}

/// How the context ended up in the instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextPlacement {
    /// A `{placeholder}` block was substituted in place.
    Placeholder,
    /// No placeholder existed; the context was appended in a delimited
    /// block.
    Appended,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextIntegration {
    pub text: String,
    pub placement: ContextPlacement,
    /// Empty context is allowed but worth surfacing.
    pub empty_context: bool,
}

/// Substitute `context` into the prompt's `{placeholder_name}` block, or
/// append it in a delimited block when the prompt has no placeholder.
/// Deterministic; every non-placeholder character is preserved.
pub fn integrate_context(
    prompt_text: &str,
    context: &str,
    placeholder_name: &str,
) -> Result<ContextIntegration, ValidateError> {
    let tokens = placeholder_tokens(prompt_text);
    let empty_context = context.trim().is_empty();
    if tokens.iter().any(|t| t == placeholder_name) {
        let needle = format!("{{{placeholder_name}}}");
        return Ok(ContextIntegration {
            text: prompt_text.replace(&needle, context),
            placement: ContextPlacement::Placeholder,
            empty_context,
        });
    }
    if !tokens.is_empty() {
        return Err(ValidateError::PlaceholderMismatch {
            found: tokens,
            expected: placeholder_name.to_string(),
        });
    }
    Ok(ContextIntegration {
        text: format!("{prompt_text}\n\n[CONTEXT]\n{context}\n[END OF CONTEXT]\n"),
        placement: ContextPlacement::Appended,
        empty_context,
    })
}

/// Brace-delimited placeholder tokens in a prompt: `{name}` where name is
/// word characters (spaces allowed), single-line, not JSON-looking.
fn placeholder_tokens(prompt: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let bytes = prompt.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some(end) = prompt[i + 1..].find(['}', '{', '\n', '"']) {
                let absolute_end = i + 1 + end;
                if bytes[absolute_end] == b'}' {
                    let inner = &prompt[i + 1..absolute_end];
                    let trimmed = inner.trim();
                    let is_token = !trimmed.is_empty()
                        && trimmed
                            .chars()
                            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == ' ')
                        && trimmed
                            .chars()
                            .next()
                            .map(|c| c.is_ascii_alphabetic() || c == '_')
                            .unwrap_or(false);
                    if is_token && !tokens.iter().any(|t| t == trimmed) {
                        tokens.push(trimmed.to_string());
                    }
                    i = absolute_end + 1;
                    continue;
                }
            }
        }
        i += 1;
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::mock::{MockTransport, ScriptedResponse};
    use crate::gateway::BackendConfig;
    use std::sync::Arc;

    fn harness(mock: Arc<MockTransport>) -> (Gateway, TemplateRegistry) {
        let mut gateway = Gateway::new();
        gateway.set_sleeper(|_| {});
        gateway
            .register_with_transport(BackendConfig::mock("m"), mock)
            .unwrap();
        (gateway, TemplateRegistry::builtin())
    }

    fn score_json(score: impl std::fmt::Display) -> String {
        format!(r#"{{"reason": "because", "score": "{score}"}}"#)
    }

    #[test]
    fn scores_parse_with_coercion() {
        let mock = Arc::new(MockTransport::new(false));
        mock.push_script(names::VALIDITY, ScriptedResponse::Text(score_json(5)));
        mock.push_script(
            names::VALIDITY,
            ScriptedResponse::Text(r#"{"reason":"r","score":4}"#.into()),
        );
        let (gateway, templates) = harness(mock);
        let validator = Validator::new(&gateway, &templates, "m", Thresholds::default());
        assert_eq!(validator.score_validity("prompt").unwrap().score, 5);
        assert_eq!(validator.score_validity("prompt").unwrap().score, 4);
    }

    #[test]
    fn out_of_range_score_retries_then_flags_as_one() {
        let mock = Arc::new(MockTransport::new(false));
        mock.push_script(names::VALIDITY, ScriptedResponse::Text(score_json(0)));
        mock.push_script(names::VALIDITY, ScriptedResponse::Text(score_json(0)));
        let (gateway, templates) = harness(mock);
        let validator = Validator::new(&gateway, &templates, "m", Thresholds::default());
        let outcome = validator.score_validity("prompt").unwrap();
        assert_eq!((outcome.score, outcome.flagged), (1, true));
        assert_eq!(gateway.request_count("m"), 2);
    }

    #[test]
    fn validate_is_a_conjunction() {
        let cases = [
            ((5, 5), (4, 4), true),
            ((5, 3), (4, 4), false),
            ((3, 5), (4, 4), false),
            ((2, 2), (1, 1), true),
        ];
        for ((v, s), (tv, ts), expected) in cases {
            let mock = Arc::new(MockTransport::new(false));
            mock.push_script(names::VALIDITY, ScriptedResponse::Text(score_json(v)));
            mock.push_script(
                names::SELF_CONSISTENCY,
                ScriptedResponse::Text(score_json(s)),
            );
            let (gateway, templates) = harness(mock);
            let validator = Validator::new(
                &gateway,
                &templates,
                "m",
                Thresholds {
                    validity: tv,
                    self_consistency: ts,
                },
            );
            let verdict = validator.validate("prompt").unwrap();
            assert_eq!(
                verdict.passed, expected,
                "scores ({v},{s}) thresholds ({tv},{ts})"
            );
        }
    }

    #[test]
    fn raising_thresholds_never_passes_more() {
        // Monotonicity: passed(t') implies passed(t) for t <= t'.
        for v in 1..=5u8 {
            for s in 1..=5u8 {
                for tv in 1..=5u8 {
                    for ts in 1..=5u8 {
                        let low = v >= tv && s >= ts;
                        for dv in 0..=(5 - tv) {
                            for ds in 0..=(5 - ts) {
                                let high = v >= tv + dv && s >= ts + ds;
                                assert!(!high || low);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn placeholder_substitution() {
        let prompt = "Summarize the notes.\n\n[SECTION SUMMARIES]\n{placeholder}\n[END OF SECTION SUMMARIES]\n";
        let done = integrate_context(prompt, "abc", "placeholder").unwrap();
        assert_eq!(done.placement, ContextPlacement::Placeholder);
        assert!(done
            .text
            .contains("[SECTION SUMMARIES]\nabc\n[END OF SECTION SUMMARIES]"));
        assert!(!done.text.contains("{placeholder}"));
    }

    #[test]
    fn mismatched_placeholder_errors() {
        let prompt = "Fill {transcript} in.";
        let err = integrate_context(prompt, "abc", "placeholder").unwrap_err();
        match err {
            ValidateError::PlaceholderMismatch { found, expected } => {
                assert_eq!(found, vec!["transcript".to_string()]);
                assert_eq!(expected, "placeholder");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn no_placeholder_appends_block() {
        let prompt = "Write a memo.";
        let done = integrate_context(prompt, "context body", "placeholder").unwrap();
        assert_eq!(done.placement, ContextPlacement::Appended);
        assert!(done.text.starts_with("Write a memo."));
        assert!(done
            .text
            .contains("[CONTEXT]\ncontext body\n[END OF CONTEXT]"));
    }

    #[test]
    fn empty_context_allowed_but_flagged() {
        let done = integrate_context("Write a memo.", "", "placeholder").unwrap();
        assert!(done.empty_context);
        assert!(done.text.contains("[CONTEXT]\n\n[END OF CONTEXT]"));
    }

    #[test]
    fn json_braces_are_not_placeholders() {
        let prompt = "Reply as {\"a\": 1} with {real_slot} filled.";
        assert_eq!(placeholder_tokens(prompt), vec!["real_slot".to_string()]);
    }

    #[test]
    fn integration_preserves_non_placeholder_characters() {
        let prompt = "Head {p} tail";
        let done = integrate_context(prompt, "X", "p").unwrap();
        assert_eq!(done.text, "Head X tail");
    }
}
