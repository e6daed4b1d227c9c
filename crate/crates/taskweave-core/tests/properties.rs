//! Property tests over the core invariants.

use proptest::prelude::*;

use taskweave_core::constraint::{canonicalize_constraint, ConstraintCategory, ConstraintRecord};
use taskweave_core::embedding::Embedder;
use taskweave_core::embedding::{cosine, HashEmbedder};
use taskweave_core::record::{Provenance, SftRecord};
use taskweave_core::state::{DecomposedTask, DecompositionResult, InstructionState};

fn category_strategy() -> impl Strategy<Value = ConstraintCategory> {
    prop_oneof![
        Just(ConstraintCategory::Content),
        Just(ConstraintCategory::Numerical),
        Just(ConstraintCategory::StyleTone),
        Just(ConstraintCategory::Format),
        Just(ConstraintCategory::Language),
        Just(ConstraintCategory::InputPlaceholder),
    ]
}

fn constraint_strategy() -> impl Strategy<Value = ConstraintRecord> {
    (
        "[a-zA-Z][a-zA-Z0-9 ]{0,30}",
        category_strategy(),
        proptest::option::of("[a-z ]{1,20}"),
    )
        .prop_map(|(text, category, simplified)| {
            let mut record = ConstraintRecord::new(text, category).unwrap();
            record.simplified_query = simplified;
            record
        })
}

fn state_strategy() -> impl Strategy<Value = InstructionState> {
    (
        "[a-zA-Z ]{1,20}",
        "[a-zA-Z ]{1,40}",
        proptest::collection::vec(constraint_strategy(), 0..6),
        0u32..4,
    )
        .prop_map(|(task_type, base_query, constraints, hop)| {
            let mut state =
                InstructionState::new(format!("t{task_type}"), format!("q{base_query}")).unwrap();
            for record in constraints {
                state.push_constraint(record);
            }
            state.hop = hop;
            state
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonicalize_is_idempotent(text in "\\PC{0,60}") {
        let once = canonicalize_constraint(&text);
        prop_assert_eq!(canonicalize_constraint(&once), once);
    }

    #[test]
    fn state_key_permutation_invariant(state in state_strategy()) {
        let key = state.state_key();
        let mut shuffled = state.clone();
        shuffled.constraints.reverse();
        prop_assert_eq!(shuffled.state_key(), key.clone());
        if shuffled.constraints.len() > 2 {
            shuffled.constraints.swap(0, 1);
            prop_assert_eq!(shuffled.state_key(), key);
        }
    }

    #[test]
    fn state_key_sensitive_to_canonical_change(state in state_strategy(), extra in "[a-z]{5,12}") {
        // Appending a fresh constraint always changes the key.
        let record = ConstraintRecord::new(format!("zz {extra}"), ConstraintCategory::Content).unwrap();
        if let Some(child) = state.child_with_added(record) {
            prop_assert_ne!(child.state_key(), state.state_key());
        }
    }

    #[test]
    fn constraint_serde_round_trip(record in constraint_strategy()) {
        let json = serde_json::to_string(&record).unwrap();
        let back: ConstraintRecord = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, record);
    }

    #[test]
    fn state_serde_round_trip(state in state_strategy()) {
        let json = serde_json::to_string(&state).unwrap();
        let back: InstructionState = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, state);
    }

    #[test]
    fn decomposition_serde_round_trip(
        tasks in proptest::collection::vec(
            ("[a-zA-Z ]{1,15}", "[a-zA-Z ]{1,25}", proptest::collection::vec(constraint_strategy(), 0..4)),
            1..3,
        ),
        raw in "\\PC{0,40}",
    ) {
        let result = DecompositionResult {
            complex: true,
            language: vec!["en".to_string()],
            tasks: tasks
                .into_iter()
                .map(|(task_type, base_query, constraints)| DecomposedTask {
                    task_type: format!("t{task_type}"),
                    base_query: format!("q{base_query}"),
                    constraints,
                })
                .collect(),
            raw,
        };
        let json = serde_json::to_string(&result).unwrap();
        let back: DecompositionResult = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, result);
    }

    #[test]
    fn sft_record_serde_round_trip(
        scores in proptest::collection::vec(1u8..=5, 5),
        hop in 0u32..4,
    ) {
        let record = SftRecord {
            instruction: "do the thing".to_string(),
            response: "done".to_string(),
            scores: taskweave_core::record::SCORE_DIMENSIONS
                .iter()
                .zip(scores)
                .map(|(d, s)| (d.to_string(), s))
                .collect(),
            provenance: Provenance { model_id: "m".to_string(), seed_state_key: "k".to_string(), hop },
        };
        record.validate().unwrap();
        let json = serde_json::to_string(&record).unwrap();
        let back: SftRecord = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, record);
    }

    #[test]
    fn embeddings_stay_normalized(text in "[a-zA-Z0-9][a-zA-Z0-9 ]{0,39}") {
        let embedder = HashEmbedder::new(96);
        let v = embedder.embed(&text).unwrap();
        prop_assert!((v.norm() - 1.0).abs() < 1e-6);
        prop_assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-6);
    }
}
