//! Instruction states: the nodes of the constraint-set search space.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::constraint::{canonicalize_constraint, ConstraintRecord};
use crate::hash::{hex16, FnvHasher};

#[derive(Debug, Clone, PartialEq)]
pub enum StateError {
    EmptyTaskType,
    EmptyBaseQuery,
    DuplicateConstraint(String),
    /// to_states was called on a result with complex = false.
    NotComplex,
    /// A complex result listed no tasks, or a task had an empty base query.
    InvalidDecomposition(String),
}

impl fmt::Display for StateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateError::EmptyTaskType => f.write_str("task type is empty"),
            StateError::EmptyBaseQuery => f.write_str("base query is empty"),
            StateError::DuplicateConstraint(key) => write!(f, "duplicate constraint key `{key}`"),
            StateError::NotComplex => {
                f.write_str("decomposition result is not complex; no states to build")
            }
            StateError::InvalidDecomposition(msg) => write!(f, "invalid decomposition: {msg}"),
        }
    }
}

impl core::error::Error for StateError {}

/// One point in the discrete query/constraint space: a task type, a base
/// query, and an ordered, canonically-unique constraint set. `hop` is the
/// BFS distance from the seed; `lineage` records the parent state key.
///
/// Constraint order is preserved for prompt readability but does not
/// affect identity: `state_key` sorts canonical keys first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionState {
    pub task_type: String,
    pub base_query: String,
    #[serde(default)]
    pub constraints: Vec<ConstraintRecord>,
    #[serde(default)]
    pub hop: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lineage: Option<String>,
}

impl InstructionState {
    pub fn new(
        task_type: impl Into<String>,
        base_query: impl Into<String>,
    ) -> Result<Self, StateError> {
        let task_type = task_type.into();
        let base_query = base_query.into();
        if task_type.trim().is_empty() {
            return Err(StateError::EmptyTaskType);
        }
        if base_query.trim().is_empty() {
            return Err(StateError::EmptyBaseQuery);
        }
        Ok(InstructionState {
            task_type,
            base_query,
            constraints: Vec::new(),
            hop: 0,
            lineage: None,
        })
    }

    /// Append a constraint, rejecting canonical duplicates. Returns false
    /// when the record duplicates an existing canonical key.
    pub fn push_constraint(&mut self, record: ConstraintRecord) -> bool {
        if self.contains_key(&record.canonical_key) {
            return false;
        }
        self.constraints.push(record);
        true
    }

    pub fn contains_key(&self, canonical_key: &str) -> bool {
        self.constraints
            .iter()
            .any(|c| c.canonical_key == canonical_key)
    }

    pub fn constraint_keys(&self) -> BTreeSet<String> {
        self.constraints
            .iter()
            .map(|c| c.canonical_key.clone())
            .collect()
    }

    /// Stable identity: hash of the canonical base query plus the sorted
    /// constraint canonical keys. Constraint order and task type do not
    /// participate; two states are the same search node exactly when this
    /// key matches.
    pub fn state_key(&self) -> String {
        let mut hasher = FnvHasher::new();
        hasher.write_field(&canonicalize_constraint(&self.base_query));
        let mut keys: Vec<&str> = self
            .constraints
            .iter()
            .map(|c| c.canonical_key.as_str())
            .collect();
        keys.sort_unstable();
        for key in keys {
            hasher.write_field(key);
        }
        hex16(hasher.finish())
    }

    pub fn validate(&self) -> Result<(), StateError> {
        if self.task_type.trim().is_empty() {
            return Err(StateError::EmptyTaskType);
        }
        if self.base_query.trim().is_empty() {
            return Err(StateError::EmptyBaseQuery);
        }
        let mut seen = BTreeSet::new();
        for c in &self.constraints {
            if !seen.insert(c.canonical_key.as_str()) {
                return Err(StateError::DuplicateConstraint(c.canonical_key.clone()));
            }
        }
        Ok(())
    }

    fn child(&self, constraints: Vec<ConstraintRecord>) -> InstructionState {
        InstructionState {
            task_type: self.task_type.clone(),
            base_query: self.base_query.clone(),
            constraints,
            hop: self.hop + 1,
            lineage: Some(self.state_key()),
        }
    }

    /// Child with `record` appended; None when the record duplicates an
    /// existing canonical key.
    pub fn child_with_added(&self, record: ConstraintRecord) -> Option<InstructionState> {
        if self.contains_key(&record.canonical_key) {
            return None;
        }
        let mut constraints = self.constraints.clone();
        constraints.push(record);
        Some(self.child(constraints))
    }

    /// Child with the constraint at `index` removed.
    pub fn child_with_removed(&self, index: usize) -> Option<InstructionState> {
        if index >= self.constraints.len() {
            return None;
        }
        let mut constraints = self.constraints.clone();
        constraints.remove(index);
        Some(self.child(constraints))
    }

    /// Child with the constraint at `index` swapped for `record`, in place.
    /// None when the replacement duplicates another remaining constraint
    /// (that would be a deletion, not a substitution) or equals the target.
    pub fn child_with_replaced(
        &self,
        index: usize,
        record: ConstraintRecord,
    ) -> Option<InstructionState> {
        if index >= self.constraints.len() {
            return None;
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.canonical_key == record.canonical_key && i != index {
                return None;
            }
        }
        if self.constraints[index].canonical_key == record.canonical_key {
            return None;
        }
        let mut constraints = self.constraints.clone();
        constraints[index] = record;
        Some(self.child(constraints))
    }
}

/// One (task type, base query, constraints) triplet from a decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposedTask {
    pub task_type: String,
    pub base_query: String,
    pub constraints: Vec<ConstraintRecord>,
}

/// Structured output of the decomposition stage for one raw instruction.
/// Simple instructions (no explicit constraints) come back with
/// `complex = false` and no tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionResult {
    pub complex: bool,
    #[serde(default)]
    pub language: Vec<String>,
    #[serde(default)]
    pub tasks: Vec<DecomposedTask>,
    pub raw: String,
}

impl DecompositionResult {
    pub fn simple(raw: impl Into<String>) -> Self {
        DecompositionResult {
            complex: false,
            language: Vec::new(),
            tasks: Vec::new(),
            raw: raw.into(),
        }
    }

    pub fn validate(&self) -> Result<(), StateError> {
        if !self.complex {
            if !self.tasks.is_empty() {
                return Err(StateError::InvalidDecomposition(
                    "simple result carries tasks".to_string(),
                ));
            }
            return Ok(());
        }
        if self.tasks.is_empty() {
            return Err(StateError::InvalidDecomposition(
                "complex result lists no tasks".to_string(),
            ));
        }
        for task in &self.tasks {
            if task.base_query.trim().is_empty() {
                return Err(StateError::InvalidDecomposition(
                    "task has an empty base query".to_string(),
                ));
            }
        }
        Ok(())
    }

    /// Build hop-0 seed states, one per task triplet. Duplicate-canonical
    /// constraints within a task are merged; the count of merged
    /// duplicates is reported so callers can warn.
    pub fn to_states(&self) -> Result<SeedStates, StateError> {
        if !self.complex {
            return Err(StateError::NotComplex);
        }
        self.validate()?;
        let mut states = Vec::with_capacity(self.tasks.len());
        let mut merged = 0usize;
        for task in &self.tasks {
            let task_type = if task.task_type.trim().is_empty() {
                "Unspecified"
            } else {
                task.task_type.as_str()
            };
            let mut state = InstructionState::new(task_type, task.base_query.clone())?;
            for record in &task.constraints {
                if !state.push_constraint(record.clone()) {
                    merged += 1;
                }
            }
            states.push(state);
        }
        Ok(SeedStates {
            states,
            merged_duplicates: merged,
        })
    }
}

/// Seed states built from a decomposition, plus dedup bookkeeping.
#[derive(Debug, Clone)]
pub struct SeedStates {
    pub states: Vec<InstructionState>,
    pub merged_duplicates: usize,
}
