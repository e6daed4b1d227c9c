//! Brute-force oracle for the breadth-first augmenter.
//!
//! The enumerator below recomputes the full <= H-edit reachable set of
//! constraint-key sets independently of the search implementation (its
//! own cosine argmax, its own level sets). The search may sample a subset
//! (small m) but must never invent a state the enumerator cannot reach,
//! and must reach exactly the enumerator's set once m covers every
//! operator's choice space.

use std::collections::{BTreeMap, BTreeSet};

use taskweave_core::bfs::{augment, BfsParams};
use taskweave_core::constraint::{ConstraintCategory, ConstraintRecord};
use taskweave_core::db::{CorpusRecord, InstructionDb};
use taskweave_core::embedding::{Embedder, EmbeddingVector, HashEmbedder};
use taskweave_core::state::{DecomposedTask, DecompositionResult, InstructionState};

type KeySet = BTreeSet<String>;

fn rec(text: &str) -> ConstraintRecord {
    ConstraintRecord::new(text, ConstraintCategory::Content).unwrap()
}

/// Pool texts are chosen lowercase-no-punctuation so canonical key == text
/// and key sets fully describe states.
fn build_db(embedder: &HashEmbedder, buckets: &[(&str, &[&str])]) -> InstructionDb {
    let mut db = InstructionDb::empty(embedder.provider_id(), embedder.dim());
    for (index, (task_type, pool)) in buckets.iter().enumerate() {
        db.ingest(
            vec![CorpusRecord {
                id: format!("r{index}"),
                result: DecompositionResult {
                    complex: true,
                    language: vec![],
                    tasks: vec![DecomposedTask {
                        task_type: task_type.to_string(),
                        base_query: format!("base query {index}"),
                        constraints: pool.iter().map(|t| rec(t)).collect(),
                    }],
                    raw: String::new(),
                },
            }],
            embedder,
        );
    }
    db
}

fn seed_state(constraints: &[&str]) -> InstructionState {
    let mut state = InstructionState::new("alpha writing", "write the test piece").unwrap();
    for c in constraints {
        assert!(state.push_constraint(rec(c)));
    }
    state
}

/// Independent cosine (no EmbeddingVector::cosine involved).
fn raw_cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    let dot: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(&x, &y)| x as f64 * y as f64)
        .sum();
    let na: f64 = a
        .values()
        .iter()
        .map(|&x| (x as f64).powi(2))
        .sum::<f64>()
        .sqrt();
    let nb: f64 = b
        .values()
        .iter()
        .map(|&y| (y as f64).powi(2))
        .sum::<f64>()
        .sqrt();
    dot / (na * nb)
}

/// All states reachable from `seed` in 1..=max_hops single edits, as
/// canonical key sets. Pool = the named bucket's constraints.
fn enumerate_reachable(
    seed: &KeySet,
    pool: &[String],
    embedder: &HashEmbedder,
    max_hops: usize,
) -> BTreeSet<Vec<String>> {
    let embeddings: BTreeMap<String, EmbeddingVector> = pool
        .iter()
        .map(|text| (text.clone(), embedder.embed(text).unwrap()))
        .collect();

    let mut seen: BTreeSet<Vec<String>> = BTreeSet::new();
    seen.insert(seed.iter().cloned().collect());
    let mut frontier: Vec<KeySet> = vec![seed.clone()];
    let mut reachable = BTreeSet::new();

    for _ in 0..max_hops {
        let mut next = Vec::new();
        for state in &frontier {
            let mut children: Vec<KeySet> = Vec::new();
            // Add: every eligible pool record.
            for key in pool {
                if !state.contains(key) {
                    let mut child = state.clone();
                    child.insert(key.clone());
                    children.push(child);
                }
            }
            // Remove: every own constraint.
            for key in state {
                let mut child = state.clone();
                child.remove(key);
                children.push(child);
            }
            // Replace: every own constraint swapped for its nearest
            // eligible pool record (independent argmax, ties to the
            // smallest key).
            for target in state {
                let target_embedding = embedder.embed(target).unwrap();
                let mut best: Option<(&String, f64)> = None;
                for key in pool {
                    if state.contains(key) {
                        continue;
                    }
                    let score = raw_cosine(&target_embedding, &embeddings[key]);
                    best = match best {
                        None => Some((key, score)),
                        Some((bk, bs)) => {
                            if score > bs || (score == bs && key < bk) {
                                Some((key, score))
                            } else {
                                Some((bk, bs))
                            }
                        }
                    };
                }
                if let Some((replacement, _)) = best {
                    let mut child = state.clone();
                    child.remove(target);
                    child.insert(replacement.clone());
                    children.push(child);
                }
            }

            for child in children {
                let sorted: Vec<String> = child.iter().cloned().collect();
                if seen.insert(sorted.clone()) {
                    reachable.insert(sorted);
                    next.push(child);
                }
            }
        }
        frontier = next;
    }
    reachable
}

fn collected_key_sets(states: &[InstructionState]) -> BTreeSet<Vec<String>> {
    states
        .iter()
        .map(|s| {
            let mut keys: Vec<String> = s
                .constraints
                .iter()
                .map(|c| c.canonical_key.clone())
                .collect();
            keys.sort();
            keys
        })
        .collect()
}

const POOL_A: [&str; 5] = [
    "must rhyme throughout",
    "must be under 200 words",
    "must mention the sea",
    "must use a formal tone",
    "must end with a question",
];
const POOL_B: [&str; 4] = [
    "must be in bullet points",
    "must cite one source",
    "must avoid jargon",
    "must include a title",
];
const POOL_C: [&str; 3] = [
    "must be in spanish",
    "must keep names untranslated",
    "must use formal address",
];

fn oracle_fixture() -> (HashEmbedder, InstructionDb, InstructionState, Vec<String>) {
    let embedder = HashEmbedder::new(48);
    let db = build_db(
        &embedder,
        &[
            ("alpha writing", &POOL_A),
            ("beta summaries", &POOL_B),
            ("gamma translation", &POOL_C),
        ],
    );
    let seed = seed_state(&["must rhyme throughout", "must mention the sea"]);
    // The seed's task type matches bucket "alpha writing" exactly, so the
    // search pool is POOL_A; the oracle uses the same pool by construction.
    let pool: Vec<String> = POOL_A.iter().map(|s| s.to_string()).collect();
    (embedder, db, seed, pool)
}

#[test]
fn oracle_superset_at_small_m() {
    let (embedder, db, seed, pool) = oracle_fixture();
    let reachable = enumerate_reachable(&seed.constraint_keys(), &pool, &embedder, 2);

    for rng_seed in 0..10 {
        let params = BfsParams {
            unique_limit: 10_000,
            op_repeats: 2,
            sample_size: 10_000,
            max_hops: 2,
            rng_seed,
            include_seed: false,
        };
        let outcome = augment(&seed, &db, &params, &embedder).unwrap();
        let collected = collected_key_sets(&outcome.trace.collected);
        for state in &collected {
            assert!(
                reachable.contains(state),
                "search visited unreachable state {state:?}"
            );
        }
    }
}

#[test]
fn oracle_equality_at_saturating_m() {
    let (embedder, db, seed, pool) = oracle_fixture();
    let reachable = enumerate_reachable(&seed.constraint_keys(), &pool, &embedder, 2);

    // m = pool size saturates every operator's choice space (|C| never
    // exceeds 4 < 5 here).
    let params = BfsParams {
        unique_limit: 10_000,
        op_repeats: POOL_A.len(),
        sample_size: 10_000,
        max_hops: 2,
        rng_seed: 99,
        include_seed: false,
    };
    let outcome = augment(&seed, &db, &params, &embedder).unwrap();
    let collected = collected_key_sets(&outcome.trace.collected);
    assert_eq!(
        collected, reachable,
        "saturated search must equal the enumerator"
    );
}

#[test]
fn oracle_equality_from_empty_seed() {
    let (embedder, db, _, pool) = oracle_fixture();
    let seed = seed_state(&[]);
    let reachable = enumerate_reachable(&seed.constraint_keys(), &pool, &embedder, 2);
    let params = BfsParams {
        unique_limit: 10_000,
        op_repeats: POOL_A.len(),
        sample_size: 10_000,
        max_hops: 2,
        rng_seed: 3,
        include_seed: false,
    };
    let outcome = augment(&seed, &db, &params, &embedder).unwrap();
    assert_eq!(collected_key_sets(&outcome.trace.collected), reachable);
}

#[test]
fn randomized_parameterizations_respect_limits() {
    let (embedder, db, seed, _) = oracle_fixture();
    let mut meta_rng = taskweave_core::rng::SplitMix64::new(0xfeed);

    for _ in 0..100 {
        let unique_limit = 1 + meta_rng.gen_range(40);
        let params = BfsParams {
            unique_limit,
            op_repeats: 1 + meta_rng.gen_range(4),
            sample_size: 1 + meta_rng.gen_range(unique_limit),
            max_hops: 1 + meta_rng.gen_range(3) as u32,
            rng_seed: meta_rng.next_u64(),
            include_seed: false,
        };
        let outcome = augment(&seed, &db, &params, &embedder).unwrap();

        let keys: BTreeSet<String> = outcome
            .trace
            .collected
            .iter()
            .map(|s| s.state_key())
            .collect();
        assert_eq!(
            keys.len(),
            outcome.trace.collected.len(),
            "duplicate state in C_all"
        );
        assert!(outcome.trace.collected.len() <= params.unique_limit);
        assert_eq!(
            outcome.samples.len(),
            params.sample_size.min(outcome.trace.collected.len()),
            "sample size must be min(k, |C_all|)"
        );

        // Every child differs from its parent by exactly one edit.
        let mut by_key: BTreeMap<String, &InstructionState> = BTreeMap::new();
        by_key.insert(seed.state_key(), &seed);
        for state in &outcome.trace.collected {
            by_key.insert(state.state_key(), state);
        }
        for entry in &outcome.trace.op_log {
            let parent = by_key[&entry.parent_key];
            let child = by_key[&entry.child_key];
            let parent_keys = parent.constraint_keys();
            let child_keys = child.constraint_keys();
            let removed = parent_keys.difference(&child_keys).count();
            let added = child_keys.difference(&parent_keys).count();
            let edit_ok = matches!((removed, added), (0, 1) | (1, 0) | (1, 1));
            assert!(
                edit_ok,
                "child {} is not one edit from parent {}",
                entry.child_key, entry.parent_key
            );
            assert_eq!(child.hop, parent.hop + 1, "hop must increment by one");
        }
    }
}

#[test]
fn determinism_byte_identical() {
    let (embedder, db, seed, _) = oracle_fixture();
    let params = BfsParams {
        unique_limit: 200,
        op_repeats: 3,
        sample_size: 50,
        max_hops: 3,
        rng_seed: 4242,
        include_seed: false,
    };
    let a = augment(&seed, &db, &params, &embedder).unwrap();
    let b = augment(&seed, &db, &params, &embedder).unwrap();
    let a_trace = serde_json::to_string(&a.trace).unwrap();
    let b_trace = serde_json::to_string(&b.trace).unwrap();
    assert_eq!(a_trace, b_trace);
    let a_samples = serde_json::to_string(&a.samples).unwrap();
    let b_samples = serde_json::to_string(&b.samples).unwrap();
    assert_eq!(a_samples, b_samples);
}
