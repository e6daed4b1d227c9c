//! Breadth-first diversification of constraint sets.
//!
//! Starting from a seed state, each dequeued state is expanded with three
//! operators against the constraint pool of the most similar task type:
//! Add (uniformly sampled pool constraint), Remove (uniformly chosen own
//! constraint), Replace (uniformly chosen own constraint swapped for its
//! nearest pool neighbor). Children are deduplicated globally by state
//! key, collection stops the instant K unique sets are gathered, and k of
//! the collected states are sampled uniformly without replacement at the
//! end.
//!
//! Each operator's m repetitions sample *without replacement* over the
//! operator's choice space, so when m covers the whole space the expansion
//! enumerates every 1-edit neighbor exactly once. That makes the search
//! equal to the brute-force enumerator at saturation instead of only
//! converging to it in probability.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::db::{similar_constraint, DbError, InstructionDb, PoolConstraint};
use crate::embedding::{Embedder, EmbeddingError};
use crate::rng::SplitMix64;
use crate::state::{InstructionState, StateError};

#[derive(Debug, Clone, PartialEq)]
pub enum BfsError {
    InvalidParams(String),
    SeedInvalid(String),
    EmptyDatabase,
    Embedding(EmbeddingError),
}

impl fmt::Display for BfsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BfsError::InvalidParams(msg) => write!(f, "invalid search parameters: {msg}"),
            BfsError::SeedInvalid(msg) => write!(f, "invalid seed state: {msg}"),
            BfsError::EmptyDatabase => f.write_str("instruction database is empty"),
            BfsError::Embedding(e) => write!(f, "embedding failure during search: {e}"),
        }
    }
}

impl core::error::Error for BfsError {}

impl From<EmbeddingError> for BfsError {
    fn from(e: EmbeddingError) -> Self {
        BfsError::Embedding(e)
    }
}

impl From<DbError> for BfsError {
    fn from(e: DbError) -> Self {
        match e {
            DbError::EmptyDatabase => BfsError::EmptyDatabase,
            DbError::Embedding(e) => BfsError::Embedding(e),
            // PoolExhausted is handled per-candidate inside expand.
            DbError::PoolExhausted => BfsError::InvalidParams("pool exhausted".to_string()),
        }
    }
}

/// Search parameters. Serialized field names follow the conventional
/// K / m / k hyperparameter spelling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BfsParams {
    /// Limit on unique collected constraint sets.
    #[serde(rename = "K")]
    pub unique_limit: usize,
    /// Repetitions of each operator per dequeued state.
    #[serde(rename = "m")]
    pub op_repeats: usize,
    /// Output sample size.
    #[serde(rename = "k")]
    pub sample_size: usize,
    /// Maximum BFS depth; a hop is one level.
    pub max_hops: u32,
    pub rng_seed: u64,
    /// Also collect the seed state itself (off by default: outputs are
    /// generated variants).
    #[serde(default, skip_serializing_if = "is_false")]
    pub include_seed: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl Default for BfsParams {
    fn default() -> Self {
        BfsParams {
            unique_limit: 2700,
            op_repeats: 10,
            sample_size: 2000,
            max_hops: 3,
            rng_seed: 0,
            include_seed: false,
        }
    }
}

impl BfsParams {
    pub fn validate(&self) -> Result<(), BfsError> {
        if self.unique_limit == 0 {
            return Err(BfsError::InvalidParams("K must be >= 1".to_string()));
        }
        if self.op_repeats == 0 {
            return Err(BfsError::InvalidParams("m must be >= 1".to_string()));
        }
        if self.sample_size == 0 {
            return Err(BfsError::InvalidParams("k must be >= 1".to_string()));
        }
        if self.sample_size > self.unique_limit {
            return Err(BfsError::InvalidParams(format!(
                "k ({}) must not exceed K ({})",
                self.sample_size, self.unique_limit
            )));
        }
        if self.max_hops == 0 {
            return Err(BfsError::InvalidParams("max_hops must be >= 1".to_string()));
        }
        Ok(())
    }
}

/// The three mutation operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BfsOp {
    Add,
    Remove,
    Replace,
}

impl BfsOp {
    pub fn as_str(&self) -> &'static str {
        match self {
            BfsOp::Add => "add",
            BfsOp::Remove => "remove",
            BfsOp::Replace => "replace",
        }
    }
}

/// One accepted expansion edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpLogEntry {
    pub parent_key: String,
    pub op: BfsOp,
    /// Which constraint key(s) the edit touched.
    pub detail: String,
    pub child_key: String,
    pub hop: u32,
}

/// Full account of one search run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    /// State keys in first-visit order (seed first).
    pub visited: Vec<String>,
    /// Keys first seen at each hop; index = hop.
    pub frontiers: Vec<Vec<String>>,
    pub op_log: Vec<OpLogEntry>,
    /// The unique collected states (C_all), in collection order.
    pub collected: Vec<InstructionState>,
    /// Set when fewer unique states existed than the requested sample
    /// size, so the sample is the whole collection.
    pub sample_truncated: bool,
}

/// Search output: the sampled states plus the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOutcome {
    pub samples: Vec<InstructionState>,
    pub trace: SearchTrace,
}

/// One candidate child produced by `expand`.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub op: BfsOp,
    pub detail: String,
    pub state: InstructionState,
}

/// Expand one state with Add / Remove / Replace, up to `m` repetitions
/// each, against the constraint pool of the task type most similar to the
/// state's. Operators whose preconditions fail (Remove/Replace on an empty
/// set, Add against an exhausted pool) are skipped silently. The base
/// query and task type are never modified.
pub fn expand(
    state: &InstructionState,
    db: &InstructionDb,
    m: usize,
    rng: &mut SplitMix64,
    embedder: &dyn Embedder,
) -> Result<Vec<Candidate>, BfsError> {
    let bucket = db.similar_task(&state.task_type, embedder)?;
    expand_with_pool(state, &bucket.constraint_pool, m, rng, embedder)
}

/// `expand` against an explicit pool (used when the caller already holds
/// the similar-task pool, e.g. a widened multi-bucket pool).
pub fn expand_with_pool(
    state: &InstructionState,
    pool: &[PoolConstraint],
    m: usize,
    rng: &mut SplitMix64,
    embedder: &dyn Embedder,
) -> Result<Vec<Candidate>, BfsError> {
    let own_keys = state.constraint_keys();
    let mut candidates = Vec::new();

    // Add: sample eligible pool constraints without replacement.
    let eligible: Vec<&PoolConstraint> = pool
        .iter()
        .filter(|p| !own_keys.contains(&p.record.canonical_key))
        .collect();
    if !eligible.is_empty() {
        for idx in rng.sample_indices(eligible.len(), m) {
            let record = eligible[idx].record.clone();
            let detail = format!("+{}", record.canonical_key);
            if let Some(child) = state.child_with_added(record) {
                candidates.push(Candidate {
                    op: BfsOp::Add,
                    detail,
                    state: child,
                });
            }
        }
    }

    // Remove: uniformly chosen own constraint, indices without replacement.
    if !state.constraints.is_empty() {
        for idx in rng.sample_indices(state.constraints.len(), m) {
            let removed = state.constraints[idx].canonical_key.clone();
            if let Some(child) = state.child_with_removed(idx) {
                candidates.push(Candidate {
                    op: BfsOp::Remove,
                    detail: format!("-{removed}"),
                    state: child,
                });
            }
        }
    }

    // Replace: uniformly chosen own constraint swapped for its nearest
    // eligible pool neighbor. Excluding every current key keeps the edit a
    // true substitution.
    if !state.constraints.is_empty() && !pool.is_empty() {
        for idx in rng.sample_indices(state.constraints.len(), m) {
            let target = &state.constraints[idx];
            let target_embedding = embedder.embed(&target.text)?;
            let replacement = match similar_constraint(pool, &target_embedding, &own_keys) {
                Ok(found) => found.record.clone(),
                Err(DbError::PoolExhausted) => continue,
                Err(other) => return Err(other.into()),
            };
            let detail = format!("{} => {}", target.canonical_key, replacement.canonical_key);
            if let Some(child) = state.child_with_replaced(idx, replacement) {
                candidates.push(Candidate {
                    op: BfsOp::Replace,
                    detail,
                    state: child,
                });
            }
        }
    }

    Ok(candidates)
}

/// Run the full breadth-first augmentation from a hop-0 seed.
///
/// Level-order exploration up to `max_hops`; children are deduplicated
/// against all visited state keys before being enqueued or collected;
/// collection stops the instant `K` unique sets are gathered; the result
/// is `min(k, |C_all|)` states sampled uniformly without replacement.
/// Fully deterministic given the seed, a frozen database, and a
/// deterministic embedder.
pub fn augment(
    seed: &InstructionState,
    db: &InstructionDb,
    params: &BfsParams,
    embedder: &dyn Embedder,
) -> Result<AugmentOutcome, BfsError> {
    if db.is_empty() {
        return Err(BfsError::EmptyDatabase);
    }
    // The task type never changes during the search, so the similar-task
    // pool is constant; resolve it once.
    let bucket = db.similar_task(&seed.task_type, embedder)?;
    augment_with_pool(seed, &bucket.constraint_pool, params, embedder)
}

/// `augment` against an explicit constraint pool, e.g. one widened to the
/// top-n similar buckets.
pub fn augment_with_pool(
    seed: &InstructionState,
    pool: &[PoolConstraint],
    params: &BfsParams,
    embedder: &dyn Embedder,
) -> Result<AugmentOutcome, BfsError> {
    params.validate()?;
    seed.validate()
        .map_err(|e: StateError| BfsError::SeedInvalid(e.to_string()))?;
    if seed.hop != 0 {
        return Err(BfsError::SeedInvalid(format!(
            "seed hop must be 0, got {}",
            seed.hop
        )));
    }

    let mut rng = SplitMix64::new(params.rng_seed);
    let seed_key = seed.state_key();
    let mut visited: BTreeSet<String> = BTreeSet::new();
    visited.insert(seed_key.clone());

    let mut trace = SearchTrace {
        visited: alloc::vec![seed_key.clone()],
        frontiers: alloc::vec![alloc::vec![seed_key.clone()]],
        op_log: Vec::new(),
        collected: Vec::new(),
        sample_truncated: false,
    };
    if params.include_seed {
        trace.collected.push(seed.clone());
    }

    let mut queue: VecDeque<InstructionState> = VecDeque::new();
    queue.push_back(seed.clone());

    'search: while let Some(state) = queue.pop_front() {
        if trace.collected.len() >= params.unique_limit {
            break;
        }
        let candidates = expand_with_pool(&state, pool, params.op_repeats, &mut rng, embedder)?;
        for candidate in candidates {
            let key = candidate.state.state_key();
            if !visited.insert(key.clone()) {
                continue;
            }
            let hop = candidate.state.hop;
            trace.visited.push(key.clone());
            if trace.frontiers.len() <= hop as usize {
                trace.frontiers.resize(hop as usize + 1, Vec::new());
            }
            trace.frontiers[hop as usize].push(key.clone());
            trace.op_log.push(OpLogEntry {
                parent_key: candidate.state.lineage.clone().unwrap_or_default(),
                op: candidate.op,
                detail: candidate.detail,
                child_key: key,
                hop,
            });
            trace.collected.push(candidate.state.clone());
            if trace.collected.len() >= params.unique_limit {
                break 'search;
            }
            if hop < params.max_hops {
                queue.push_back(candidate.state);
            }
        }
    }

    let total = trace.collected.len();
    let samples = if total <= params.sample_size {
        trace.sample_truncated = total < params.sample_size;
        trace.collected.clone()
    } else {
        rng.sample_indices(total, params.sample_size)
            .into_iter()
            .map(|i| trace.collected[i].clone())
            .collect()
    };

    Ok(AugmentOutcome { samples, trace })
}

/// Count collected states per hop.
pub fn hop_histogram(trace: &SearchTrace) -> BTreeMap<u32, usize> {
    let mut histogram = BTreeMap::new();
    for state in &trace.collected {
        *histogram.entry(state.hop).or_insert(0) += 1;
    }
    histogram
}
