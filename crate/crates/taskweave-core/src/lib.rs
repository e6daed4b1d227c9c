//! Deterministic core for task-centric instruction augmentation.
//!
//! An instruction is modelled as a point in a discrete space: a task type,
//! a base query, and a set of categorized natural-language constraints.
//! This crate owns everything that must be exactly reproducible given a
//! seed — canonicalization and state identity, the task-organized
//! constraint database and its retrieval primitives, breadth-first
//! exploration of the constraint-set space (Add / Remove / Replace), and
//! the pairwise-embedding diversity metric.
//!
//! The crate is `no_std` + `alloc`; everything that touches the network,
//! the filesystem, or a live model lives in the companion `taskweave`
//! crate.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod bfs;
pub mod constraint;
pub mod db;
pub mod diversity;
pub mod embedding;
pub mod hash;
pub mod record;
pub mod rng;
pub mod state;

pub use bfs::{
    augment, augment_with_pool, expand, expand_with_pool, hop_histogram, AugmentOutcome, BfsError,
    BfsOp, BfsParams, OpLogEntry, SearchTrace,
};
pub use constraint::{
    canonicalize_constraint, ConstraintCategory, ConstraintError, ConstraintRecord,
};
pub use db::{
    sample_constraint, similar_constraint, BucketStats, CorpusRecord, DbError, DbStats,
    IngestReport, InstructionDb, PoolConstraint, TaskBucket,
};
pub use diversity::{diversity, DiversityReport, HopDiversity, MetricsError, SkippedHop};
pub use embedding::{
    cosine, nearest, Embedder, EmbeddingError, EmbeddingVector, HashEmbedder, RankedMatch,
};
pub use record::{Provenance, RecordError, SftRecord, SCORE_DIMENSIONS};
pub use rng::SplitMix64;
pub use state::{DecomposedTask, DecompositionResult, InstructionState, SeedStates, StateError};
