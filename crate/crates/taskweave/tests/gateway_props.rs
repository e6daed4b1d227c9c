//! Property tests for the gateway: JSON extraction from noisy model
//! output and mock determinism.

use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;
use serde_json::Value;

use taskweave::decomposer::Decomposer;
use taskweave::gateway::extract::extract_json;
use taskweave::gateway::mock::MockTransport;
use taskweave::gateway::template::{names, TemplateRegistry};
use taskweave::gateway::{BackendConfig, Gateway};

fn json_value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::from),
        any::<i32>().prop_map(Value::from),
        "[a-zA-Z0-9 .,:!?'-]{0,16}".prop_map(Value::from),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            proptest::collection::vec(inner.clone(), 0..4).prop_map(Value::from),
            proptest::collection::btree_map("[a-z_]{1,8}", inner, 0..4)
                .prop_map(|map| Value::Object(map.into_iter().collect())),
        ]
    })
}

/// Root values the extractor is defined over: objects and arrays.
fn json_root() -> impl Strategy<Value = Value> {
    prop_oneof![
        proptest::collection::btree_map("[a-z_]{1,8}", json_value(), 0..4)
            .prop_map(|map| Value::Object(map.into_iter().collect())),
        proptest::collection::vec(json_value(), 0..4).prop_map(Value::from),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Arbitrary JSON embedded in brace-free prose extracts intact.
    #[test]
    fn extraction_recovers_embedded_json(
        value in json_root(),
        prefix in "[a-zA-Z0-9 .,:;!?'\"\\-\n]{0,60}",
        suffix in "\\PC{0,60}",
    ) {
        let raw = format!("{prefix}{}{suffix}", serde_json::to_string(&value).unwrap());
        let extracted = extract_json(&raw).unwrap();
        prop_assert_eq!(extracted, value);
    }

    /// Code-fenced JSON extracts intact.
    #[test]
    fn extraction_handles_code_fences(value in json_root()) {
        let raw = format!("Sure, here it is:\n```json\n{}\n```\nanything else?", serde_json::to_string(&value).unwrap());
        let extracted = extract_json(&raw).unwrap();
        prop_assert_eq!(extracted, value);
    }

    /// Identical (template, vars) yield identical completions from the
    /// synthesizer mock.
    #[test]
    fn mock_completions_are_deterministic(task_prompt in "[a-zA-Z0-9 .,]{1,80}") {
        let mut gateway = Gateway::new();
        gateway.set_sleeper(|_| {});
        gateway
            .register_with_transport(BackendConfig::mock("m"), Arc::new(MockTransport::new(true)))
            .unwrap();
        let templates = TemplateRegistry::builtin();
        let vars: BTreeMap<String, String> = [("task_prompt".to_string(), task_prompt)].into();
        let prompt = templates.render(names::VALIDITY, &vars).unwrap();
        let first = gateway.complete("m", names::VALIDITY, &prompt).unwrap();
        let second = gateway.complete("m", names::VALIDITY, &prompt).unwrap();
        prop_assert_eq!(first, second);
    }
}

/// Under the mock backend, decomposition is a pure function of the
/// instruction: byte-stable across calls for a regression corpus.
#[test]
fn decomposition_is_byte_stable_under_mock() {
    let corpus = [
        "Write a travel ad for a trip to the Adirondack mountains. Focus on activities there, the scenery, and keep it concise and under 200 words.",
        "Summarize the quarterly report. Use bullet points. Keep it under 10 lines.",
        "Translate the product page into Spanish. Keep brand names untranslated.",
        "What is a watershed",
    ];
    let mut gateway = Gateway::new();
    gateway.set_sleeper(|_| {});
    gateway
        .register_with_transport(BackendConfig::mock("m"), Arc::new(MockTransport::new(true)))
        .unwrap();
    let templates = TemplateRegistry::builtin();
    let decomposer = Decomposer::new(&gateway, &templates, "m");

    for instruction in corpus {
        let first = serde_json::to_string(&decomposer.decompose(instruction).unwrap()).unwrap();
        let second = serde_json::to_string(&decomposer.decompose(instruction).unwrap()).unwrap();
        assert_eq!(first, second, "decomposition drifted for: {instruction}");
    }
}
