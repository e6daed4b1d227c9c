//! Instruction augmentation pipeline.
//!
//! Six stages turn one seed instruction into an SFT-ready dataset:
//! decompose the seed into a (task type, base query, constraints) state;
//! build or load a task-organized constraint database; diversify the
//! state by breadth-first search over Add/Remove/Replace edits; compose
//! each state back into a natural-language prompt with a verify/refine
//! repair loop; validate prompts with two judge scores and pair survivors
//! with real-world context; generate candidate responses from a model
//! pool and keep the best-scored one per instruction.
//!
//! The deterministic search core lives in `taskweave-core`; this crate
//! adds the LLM gateway, embedding providers, file formats, stage
//! orchestration, and the CLI.

pub mod cli;
pub mod composer;
pub mod decomposer;
pub mod embed;
pub mod error;
pub mod gateway;
pub mod jsonl;
pub mod metrics;
pub mod parallel;
pub mod pipeline;
pub mod responses;
pub mod store;
pub mod validator;

pub use error::{
    ComposeError, DecomposeError, GatewayError, PipelineError, ResponseError, ValidateError,
};
pub use gateway::{BackendConfig, BackendKind, ChatRequest, ChatTransport, Gateway};

// The algorithmic core, re-exported for callers that drive it directly.
pub use taskweave_core as core;
