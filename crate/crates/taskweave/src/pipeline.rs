//! End-to-end orchestration: configuration, run manifest, resumable
//! stages, and the bundled dry-run.
//!
//! Every stage reads the previous stage's JSONL artifact, writes its own
//! plus a `.done` sidecar marker, and updates the run manifest. Re-running
//! with the same output directory resumes at the first stage whose marker
//! is missing. Stage artifacts are never mutated by later stages.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use taskweave_core::bfs::{augment, hop_histogram, BfsParams};
use taskweave_core::db::{CorpusRecord, InstructionDb};
use taskweave_core::embedding::Embedder;
use taskweave_core::hash::{fnv1a, hex16};
use taskweave_core::record::SftRecord;
use taskweave_core::state::InstructionState;

use crate::composer::{ComposeStatus, ComposedInstruction, Composer};
use crate::decomposer::{Decomposer, RawInstruction};
use crate::embed::{CachingEmbedder, EmbeddingProviderConfig};
use crate::error::PipelineError;
use crate::gateway::template::TemplateRegistry;
use crate::gateway::{BackendConfig, Gateway};
use crate::jsonl;
use crate::parallel::parallel_map;
use crate::responses::{Candidate, ResponseGenerator, ResponseScorer};
use crate::store;
use crate::validator::{integrate_context, Thresholds, ValidationVerdict, Validator};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Backend ids used by each LLM-calling stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageBackends {
    pub decompose: String,
    pub compose: String,
    pub validate: String,
    /// Data-quality filtering judge.
    pub judge: String,
    /// Response generation pool, in tie-break order.
    pub generation_pool: Vec<String>,
}

/// Optional default file locations; CLI flags override.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PipelinePaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contexts: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub db: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_fanout() -> usize {
    5
}
fn default_workers() -> usize {
    4
}
fn default_compose_retries() -> u32 {
    3
}
fn default_decompose_retries() -> u32 {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Master seed; overrides `bfs.rng_seed` for pipeline runs.
    pub rng_seed: u64,
    pub backends: Vec<BackendConfig>,
    pub stages: StageBackends,
    pub bfs: BfsParams,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default = "default_fanout")]
    pub context_fanout: usize,
    #[serde(default = "default_compose_retries")]
    pub compose_max_retries: u32,
    #[serde(default = "default_decompose_retries")]
    pub decompose_retry_limit: u32,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub embedding: EmbeddingProviderConfig,
    #[serde(default)]
    pub paths: PipelinePaths,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let ids: BTreeSet<&str> = self
            .backends
            .iter()
            .map(|b| b.backend_id.as_str())
            .collect();
        if ids.len() != self.backends.len() {
            return Err(PipelineError::Config("duplicate backend_id".to_string()));
        }
        for backend in &self.backends {
            backend
                .validate()
                .map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        let mut referenced: Vec<&str> = vec![
            self.stages.decompose.as_str(),
            self.stages.compose.as_str(),
            self.stages.validate.as_str(),
            self.stages.judge.as_str(),
        ];
        referenced.extend(self.stages.generation_pool.iter().map(|s| s.as_str()));
        for id in referenced {
            if !ids.contains(id) {
                return Err(PipelineError::Config(format!(
                    "stage references unknown backend `{id}`"
                )));
            }
        }
        if self.stages.generation_pool.is_empty() {
            return Err(PipelineError::Config(
                "generation_pool is empty".to_string(),
            ));
        }
        self.bfs
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.thresholds.validate().map_err(PipelineError::Config)?;
        if self.context_fanout == 0 {
            return Err(PipelineError::Config(
                "context_fanout must be >= 1".to_string(),
            ));
        }
        if self.workers == 0 {
            return Err(PipelineError::Config("workers must be >= 1".to_string()));
        }
        Ok(())
    }

    /// Stable hash of the canonical JSON serialization.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex16(fnv1a(canonical.as_bytes()))
    }

    /// All-mock configuration used by `--dry-run` and tests.
    pub fn mock_default() -> Self {
        let mut backends = vec![BackendConfig::mock("mock-judge")];
        for id in ["gen-a", "gen-b", "gen-c", "gen-d"] {
            backends.push(BackendConfig::mock(id));
        }
        PipelineConfig {
            rng_seed: 17,
            backends,
            stages: StageBackends {
                decompose: "mock-judge".to_string(),
                compose: "mock-judge".to_string(),
                validate: "mock-judge".to_string(),
                judge: "mock-judge".to_string(),
                generation_pool: ["gen-a", "gen-b", "gen-c", "gen-d"]
                    .map(String::from)
                    .to_vec(),
            },
            bfs: BfsParams {
                unique_limit: 60,
                op_repeats: 3,
                sample_size: 12,
                max_hops: 2,
                rng_seed: 17,
                include_seed: false,
            },
            thresholds: Thresholds::default(),
            context_fanout: 2,
            compose_max_retries: 3,
            decompose_retry_limit: 3,
            workers: 4,
            embedding: EmbeddingProviderConfig::Mock { dim: 64 },
            paths: PipelinePaths::default(),
        }
    }
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStatus {
    pub name: String,
    pub input_count: usize,
    pub output_count: usize,
    pub discarded: usize,
    pub completed: bool,
}

/// Written after every stage; deliberately carries no timestamps so that
/// identical runs produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub rng_seed: u64,
    pub stages: Vec<StageStatus>,
}

impl RunManifest {
    fn new(config: &PipelineConfig) -> Self {
        RunManifest {
            config_hash: config.config_hash(),
            rng_seed: config.rng_seed,
            stages: Vec::new(),
        }
    }

    pub fn stage(&self, name: &str) -> Option<&StageStatus> {
        self.stages.iter().find(|s| s.name == name)
    }

    fn record_stage(&mut self, status: StageStatus) {
        match self.stages.iter_mut().find(|s| s.name == status.name) {
            Some(existing) => *existing = status,
            None => self.stages.push(status),
        }
    }
}

// ---------------------------------------------------------------------------
// Stage artifacts
// ---------------------------------------------------------------------------

pub mod artifacts {
    pub const MANIFEST: &str = "manifest.json";
    pub const DB_DIR: &str = "db";
    pub const BUILD_DB_MARKER: &str = "00_db.done";
    pub const DECOMPOSED: &str = "01_decomposed.jsonl";
    pub const STATES: &str = "02_states.jsonl";
    pub const TRACE: &str = "02_trace.jsonl";
    pub const COMPOSED: &str = "03_composed.jsonl";
    pub const VALIDATED: &str = "04_validated.jsonl";
    pub const REJECTED: &str = "04_rejected.jsonl";
    pub const CANDIDATES: &str = "05_candidates.jsonl";
    pub const SFT: &str = "06_sft.jsonl";
}

/// Stage names in execution order (excluding the optional db build).
pub const STAGES: [&str; 6] = [
    "decompose",
    "augment",
    "compose",
    "validate",
    "generate",
    "filter",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecomposedSeed {
    pub seed_id: String,
    pub instruction: String,
    pub result: taskweave_core::state::DecompositionResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateRecord {
    pub seed_id: String,
    pub state_key: String,
    pub state: InstructionState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComposedRecord {
    pub seed_id: String,
    pub hop: u32,
    #[serde(flatten)]
    pub composed: ComposedInstruction,
}

/// One context input for pairing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextRecord {
    pub id: String,
    pub context: String,
    /// Placeholder name this context fills; defaults to "placeholder".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placeholder: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidatedRecord {
    pub pair_id: String,
    pub seed_id: String,
    pub state_key: String,
    pub hop: u32,
    pub instruction: String,
    pub context_id: String,
    pub verdict: ValidationVerdict,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RejectedRecord {
    pub seed_id: String,
    pub state_key: String,
    pub prompt_text: String,
    pub verdict: ValidationVerdict,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidatesRecord {
    pub pair_id: String,
    pub seed_id: String,
    pub state_key: String,
    pub hop: u32,
    pub instruction: String,
    pub candidates: Vec<Candidate>,
}

/// Trace-file lines: one meta line per seed followed by its edges.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceLine {
    Meta {
        seed_id: String,
        collected: usize,
        sampled: usize,
        sample_truncated: bool,
        frontier_sizes: Vec<usize>,
        hop_histogram: std::collections::BTreeMap<u32, usize>,
    },
    Op {
        seed_id: String,
        parent_key: String,
        op: taskweave_core::bfs::BfsOp,
        detail: String,
        child_key: String,
        hop: u32,
    },
}

// ---------------------------------------------------------------------------
// Handles
// ---------------------------------------------------------------------------

/// Everything the stages share: gateway, templates, caching embedder.
pub struct PipelineHandles {
    pub gateway: Gateway,
    pub templates: TemplateRegistry,
    pub embedder: Arc<CachingEmbedder>,
}

pub fn build_handles(config: &PipelineConfig) -> Result<PipelineHandles, PipelineError> {
    let mut gateway = Gateway::new();
    for backend in &config.backends {
        gateway
            .register(backend.clone())
            .map_err(|e| PipelineError::Config(e.to_string()))?;
    }
    Ok(PipelineHandles {
        gateway,
        templates: TemplateRegistry::builtin(),
        embedder: Arc::new(CachingEmbedder::new(config.embedding.build())),
    })
}

// ---------------------------------------------------------------------------
// Inputs and run driver
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RunInputs {
    pub seed_path: PathBuf,
    pub contexts_path: PathBuf,
    /// Prebuilt database directory; wins over `corpus_path`.
    pub db_dir: Option<PathBuf>,
    /// Decomposed corpus (JSONL of corpus records) to build a database
    /// from when no `db_dir` is given.
    pub corpus_path: Option<PathBuf>,
    pub out_dir: PathBuf,
}

fn marker_path(out_dir: &Path, artifact: &str) -> PathBuf {
    out_dir.join(format!("{artifact}.done"))
}

fn mark_done(out_dir: &Path, artifact: &str) -> Result<(), PipelineError> {
    let path = marker_path(out_dir, artifact);
    std::fs::write(&path, "done\n").map_err(|e| PipelineError::io(path.display().to_string(), e))
}

fn is_done(out_dir: &Path, artifact: &str) -> bool {
    marker_path(out_dir, artifact).exists()
}

/// Execute the pipeline, resuming from existing stage markers in
/// `out_dir`. `stop_after` ends the run after the named stage completes
/// (used by the resume tests and handy for debugging).
pub fn run_pipeline(
    config: &PipelineConfig,
    inputs: &RunInputs,
    stop_after: Option<&str>,
) -> Result<RunManifest, PipelineError> {
    config.validate()?;
    let out_dir = &inputs.out_dir;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| PipelineError::io(out_dir.display().to_string(), e))?;

    let manifest_path = out_dir.join(artifacts::MANIFEST);
    let mut manifest = if manifest_path.exists() {
        let existing: RunManifest = jsonl::read_json(&manifest_path)?;
        if existing.config_hash != config.config_hash() {
            return Err(PipelineError::ConfigChanged {
                found: existing.config_hash,
                expected: config.config_hash(),
            });
        }
        existing
    } else {
        RunManifest::new(config)
    };

    let handles = build_handles(config)?;
    let db = resolve_db(inputs, &handles, &mut manifest, &manifest_path)?;

    let mut stop = false;
    for stage in STAGES {
        if stop {
            break;
        }
        match stage {
            "decompose" => run_or_skip(
                out_dir,
                artifacts::DECOMPOSED,
                &mut manifest,
                &manifest_path,
                || {
                    stage_decompose(
                        config,
                        &handles,
                        &inputs.seed_path,
                        &out_dir.join(artifacts::DECOMPOSED),
                    )
                },
            )?,
            "augment" => run_or_skip(
                out_dir,
                artifacts::STATES,
                &mut manifest,
                &manifest_path,
                || {
                    stage_augment(
                        config,
                        &handles,
                        &db,
                        &out_dir.join(artifacts::DECOMPOSED),
                        &out_dir.join(artifacts::STATES),
                        &out_dir.join(artifacts::TRACE),
                    )
                },
            )?,
            "compose" => run_or_skip(
                out_dir,
                artifacts::COMPOSED,
                &mut manifest,
                &manifest_path,
                || {
                    stage_compose(
                        config,
                        &handles,
                        &out_dir.join(artifacts::STATES),
                        &out_dir.join(artifacts::COMPOSED),
                    )
                },
            )?,
            "validate" => run_or_skip(
                out_dir,
                artifacts::VALIDATED,
                &mut manifest,
                &manifest_path,
                || {
                    stage_validate(
                        config,
                        &handles,
                        &out_dir.join(artifacts::COMPOSED),
                        &inputs.contexts_path,
                        &out_dir.join(artifacts::VALIDATED),
                        &out_dir.join(artifacts::REJECTED),
                    )
                },
            )?,
            "generate" => run_or_skip(
                out_dir,
                artifacts::CANDIDATES,
                &mut manifest,
                &manifest_path,
                || {
                    stage_generate(
                        config,
                        &handles,
                        &out_dir.join(artifacts::VALIDATED),
                        &out_dir.join(artifacts::CANDIDATES),
                    )
                },
            )?,
            "filter" => run_or_skip(
                out_dir,
                artifacts::SFT,
                &mut manifest,
                &manifest_path,
                || {
                    stage_filter(
                        config,
                        &handles,
                        &out_dir.join(artifacts::CANDIDATES),
                        &out_dir.join(artifacts::SFT),
                    )
                },
            )?,
            _ => unreachable!(),
        };
        if stop_after == Some(stage) {
            stop = true;
        }
    }

    Ok(manifest)
}

/// Run one stage unless its marker exists; persist manifest either way.
fn run_or_skip(
    out_dir: &Path,
    artifact: &str,
    manifest: &mut RunManifest,
    manifest_path: &Path,
    run: impl FnOnce() -> Result<StageStatus, PipelineError>,
) -> Result<bool, PipelineError> {
    if is_done(out_dir, artifact) {
        return Ok(false);
    }
    let status = run()?;
    manifest.record_stage(status);
    jsonl::write_json_pretty(manifest_path, manifest)?;
    mark_done(out_dir, artifact)?;
    Ok(true)
}

fn resolve_db(
    inputs: &RunInputs,
    handles: &PipelineHandles,
    manifest: &mut RunManifest,
    manifest_path: &Path,
) -> Result<InstructionDb, PipelineError> {
    if let Some(dir) = &inputs.db_dir {
        let cache = store::embedding_cache_path(dir);
        if cache.exists() {
            handles.embedder.load(&cache)?;
        }
        return store::load_db(dir);
    }
    let corpus_path = inputs.corpus_path.as_ref().ok_or_else(|| {
        PipelineError::Config(
            "run-pipeline needs either a database directory or a decomposed corpus".to_string(),
        )
    })?;
    let db_dir = inputs.out_dir.join(artifacts::DB_DIR);
    if inputs.out_dir.join(artifacts::BUILD_DB_MARKER).exists() {
        let cache = store::embedding_cache_path(&db_dir);
        if cache.exists() {
            handles.embedder.load(&cache)?;
        }
        return store::load_db(&db_dir);
    }

    let records: Vec<CorpusRecord> = jsonl::read_jsonl(corpus_path)?;
    let input_count = records.len();
    let mut db = InstructionDb::empty(handles.embedder.provider_id(), handles.embedder.dim());
    let report = db.ingest(records, handles.embedder.as_ref());
    store::save_db(&db, &db_dir)?;
    handles
        .embedder
        .save(store::embedding_cache_path(&db_dir))?;
    manifest.record_stage(StageStatus {
        name: "build-db".to_string(),
        input_count,
        output_count: db.bucket_count(),
        discarded: report.records_invalid + report.embedding_failures,
        completed: true,
    });
    jsonl::write_json_pretty(manifest_path, manifest)?;
    let marker = inputs.out_dir.join(artifacts::BUILD_DB_MARKER);
    std::fs::write(&marker, "done\n")
        .map_err(|e| PipelineError::io(marker.display().to_string(), e))?;
    Ok(db)
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

pub fn stage_decompose(
    config: &PipelineConfig,
    handles: &PipelineHandles,
    seed_path: &Path,
    out_path: &Path,
) -> Result<StageStatus, PipelineError> {
    let seeds: Vec<RawInstruction> = jsonl::read_jsonl(seed_path)?;
    if seeds.is_empty() {
        return Err(PipelineError::stage(
            "decompose",
            seed_path.display().to_string(),
            "seed file is empty",
        ));
    }
    let decomposer = Decomposer::new(
        &handles.gateway,
        &handles.templates,
        config.stages.decompose.clone(),
    )
    .with_retry_limit(config.decompose_retry_limit);

    let mut out = Vec::with_capacity(seeds.len());
    for seed in &seeds {
        let result = decomposer
            .decompose(&seed.instruction)
            .map_err(|e| PipelineError::stage("decompose", &seed.id, e))?;
        if !result.complex || result.tasks.len() != 1 {
            return Err(PipelineError::stage(
                "decompose",
                &seed.id,
                "augmentation seeds must decompose into exactly one task; split the seed instruction",
            ));
        }
        out.push(DecomposedSeed {
            seed_id: seed.id.clone(),
            instruction: seed.instruction.clone(),
            result,
        });
    }
    jsonl::write_jsonl(out_path, &out)?;
    Ok(StageStatus {
        name: "decompose".to_string(),
        input_count: seeds.len(),
        output_count: out.len(),
        discarded: 0,
        completed: true,
    })
}

pub fn stage_augment(
    config: &PipelineConfig,
    handles: &PipelineHandles,
    db: &InstructionDb,
    decomposed_path: &Path,
    states_path: &Path,
    trace_path: &Path,
) -> Result<StageStatus, PipelineError> {
    let seeds: Vec<DecomposedSeed> = jsonl::read_jsonl(decomposed_path)?;
    let mut states = Vec::new();
    let mut trace_lines = Vec::new();

    for (index, seed) in seeds.iter().enumerate() {
        let seed_states = seed
            .result
            .to_states()
            .map_err(|e| PipelineError::stage("augment", &seed.seed_id, e))?;
        let state = &seed_states.states[0];
        // Each seed gets its own derived stream so multi-seed runs stay
        // deterministic regardless of seed order in the file.
        let params = BfsParams {
            rng_seed: config.rng_seed.wrapping_add(index as u64),
            ..config.bfs.clone()
        };
        let outcome = augment(state, db, &params, handles.embedder.as_ref())
            .map_err(|e| PipelineError::stage("augment", &seed.seed_id, e))?;

        trace_lines.push(TraceLine::Meta {
            seed_id: seed.seed_id.clone(),
            collected: outcome.trace.collected.len(),
            sampled: outcome.samples.len(),
            sample_truncated: outcome.trace.sample_truncated,
            frontier_sizes: outcome.trace.frontiers.iter().map(|f| f.len()).collect(),
            hop_histogram: hop_histogram(&outcome.trace),
        });
        for entry in &outcome.trace.op_log {
            trace_lines.push(TraceLine::Op {
                seed_id: seed.seed_id.clone(),
                parent_key: entry.parent_key.clone(),
                op: entry.op,
                detail: entry.detail.clone(),
                child_key: entry.child_key.clone(),
                hop: entry.hop,
            });
        }
        for state in outcome.samples {
            states.push(StateRecord {
                seed_id: seed.seed_id.clone(),
                state_key: state.state_key(),
                state,
            });
        }
    }

    jsonl::write_jsonl(states_path, &states)?;
    jsonl::write_jsonl(trace_path, &trace_lines)?;
    Ok(StageStatus {
        name: "augment".to_string(),
        input_count: seeds.len(),
        output_count: states.len(),
        discarded: 0,
        completed: true,
    })
}

pub fn stage_compose(
    config: &PipelineConfig,
    handles: &PipelineHandles,
    states_path: &Path,
    out_path: &Path,
) -> Result<StageStatus, PipelineError> {
    let states: Vec<StateRecord> = jsonl::read_jsonl(states_path)?;
    let composer = Composer::new(
        &handles.gateway,
        &handles.templates,
        config.stages.compose.clone(),
    );

    let composed: Vec<ComposedRecord> =
        parallel_map(&states, config.workers, |_, record| ComposedRecord {
            seed_id: record.seed_id.clone(),
            hop: record.state.hop,
            composed: composer.compose_with_repair(&record.state, config.compose_max_retries),
        });

    let (kept, failed): (Vec<_>, Vec<_>) = composed
        .into_iter()
        .partition(|r| r.composed.status != ComposeStatus::Failed);
    jsonl::write_jsonl(out_path, &kept)?;
    Ok(StageStatus {
        name: "compose".to_string(),
        input_count: states.len(),
        output_count: kept.len(),
        discarded: failed.len(),
        completed: true,
    })
}

pub fn stage_validate(
    config: &PipelineConfig,
    handles: &PipelineHandles,
    composed_path: &Path,
    contexts_path: &Path,
    validated_path: &Path,
    rejected_path: &Path,
) -> Result<StageStatus, PipelineError> {
    let composed: Vec<ComposedRecord> = jsonl::read_jsonl(composed_path)?;
    let contexts: Vec<ContextRecord> = jsonl::read_jsonl(contexts_path)?;
    if contexts.is_empty() {
        return Err(PipelineError::stage(
            "validate",
            contexts_path.display().to_string(),
            "context file is empty",
        ));
    }
    let fanout = config.context_fanout.min(contexts.len());
    let validator = Validator::new(
        &handles.gateway,
        &handles.templates,
        config.stages.validate.clone(),
        config.thresholds,
    );

    let verdicts: Vec<Result<ValidationVerdict, String>> =
        parallel_map(&composed, config.workers, |_, record| {
            validator
                .validate(&record.composed.prompt_text)
                .map_err(|e| e.to_string())
        });

    let mut validated = Vec::new();
    let mut rejected = Vec::new();
    for (record, verdict) in composed.iter().zip(verdicts) {
        let verdict =
            verdict.map_err(|e| PipelineError::stage("validate", &record.composed.state_key, e))?;
        if !verdict.passed {
            rejected.push(RejectedRecord {
                seed_id: record.seed_id.clone(),
                state_key: record.composed.state_key.clone(),
                prompt_text: record.composed.prompt_text.clone(),
                verdict,
            });
            continue;
        }
        for (ctx_index, context) in contexts.iter().take(fanout).enumerate() {
            let placeholder = context.placeholder.as_deref().unwrap_or("placeholder");
            let integrated =
                integrate_context(&record.composed.prompt_text, &context.context, placeholder)
                    .map_err(|e| PipelineError::stage("validate", &record.composed.state_key, e))?;
            validated.push(ValidatedRecord {
                pair_id: format!("{}:{}", record.composed.state_key, ctx_index),
                seed_id: record.seed_id.clone(),
                state_key: record.composed.state_key.clone(),
                hop: record.hop,
                instruction: integrated.text,
                context_id: context.id.clone(),
                verdict: verdict.clone(),
            });
        }
    }

    jsonl::write_jsonl(validated_path, &validated)?;
    jsonl::write_jsonl(rejected_path, &rejected)?;
    Ok(StageStatus {
        name: "validate".to_string(),
        input_count: composed.len(),
        output_count: validated.len(),
        discarded: rejected.len(),
        completed: true,
    })
}

pub fn stage_generate(
    config: &PipelineConfig,
    handles: &PipelineHandles,
    validated_path: &Path,
    out_path: &Path,
) -> Result<StageStatus, PipelineError> {
    let validated: Vec<ValidatedRecord> = jsonl::read_jsonl(validated_path)?;
    let generator = ResponseGenerator::new(&handles.gateway, config.stages.generation_pool.clone());

    let results: Vec<Result<Vec<Candidate>, String>> =
        parallel_map(&validated, config.workers, |_, record| {
            generator
                .generate_candidates(&record.instruction)
                .map_err(|e| e.to_string())
        });

    let mut out = Vec::with_capacity(validated.len());
    for (record, candidates) in validated.iter().zip(results) {
        let candidates =
            candidates.map_err(|e| PipelineError::stage("generate", &record.pair_id, e))?;
        out.push(CandidatesRecord {
            pair_id: record.pair_id.clone(),
            seed_id: record.seed_id.clone(),
            state_key: record.state_key.clone(),
            hop: record.hop,
            instruction: record.instruction.clone(),
            candidates,
        });
    }

    jsonl::write_jsonl(out_path, &out)?;
    Ok(StageStatus {
        name: "generate".to_string(),
        input_count: validated.len(),
        output_count: out.len(),
        discarded: 0,
        completed: true,
    })
}

pub fn stage_filter(
    config: &PipelineConfig,
    handles: &PipelineHandles,
    candidates_path: &Path,
    out_path: &Path,
) -> Result<StageStatus, PipelineError> {
    let batches: Vec<CandidatesRecord> = jsonl::read_jsonl(candidates_path)?;
    let scorer = ResponseScorer::new(
        &handles.gateway,
        &handles.templates,
        config.stages.judge.clone(),
    );

    let records: Vec<Result<SftRecord, String>> =
        parallel_map(&batches, config.workers, |_, batch| {
            let mut scored = Vec::with_capacity(batch.candidates.len());
            for candidate in &batch.candidates {
                scored.push(
                    scorer
                        .score_candidate(None, &batch.instruction, candidate)
                        .map_err(|e| e.to_string())?,
                );
            }
            let best = crate::responses::select_best(&scored).map_err(|e| e.to_string())?;
            let record = crate::responses::to_sft_record(
                best,
                &batch.instruction,
                &batch.state_key,
                batch.hop,
            );
            record.validate().map_err(|e| e.to_string())?;
            Ok(record)
        });

    let mut out = Vec::with_capacity(batches.len());
    for (batch, record) in batches.iter().zip(records) {
        out.push(record.map_err(|e| PipelineError::stage("filter", &batch.pair_id, e))?);
    }

    jsonl::write_jsonl(out_path, &out)?;
    Ok(StageStatus {
        name: "filter".to_string(),
        input_count: batches.len(),
        output_count: out.len(),
        discarded: 0,
        completed: true,
    })
}

// ---------------------------------------------------------------------------
// Dry-run fixtures
// ---------------------------------------------------------------------------

const DRY_RUN_SEED: &str = include_str!("../fixtures/seed.jsonl");
const DRY_RUN_CONTEXTS: &str = include_str!("../fixtures/contexts.jsonl");
const DRY_RUN_CORPUS: &str = include_str!("../fixtures/corpus.jsonl");

/// Write the bundled toy fixtures into `dir` and return ready-to-run
/// inputs (used by `run-pipeline --dry-run` and CI).
pub fn write_dry_run_inputs(dir: impl AsRef<Path>) -> Result<RunInputs, PipelineError> {
    let dir = dir.as_ref();
    let fixtures = dir.join("fixtures");
    std::fs::create_dir_all(&fixtures)
        .map_err(|e| PipelineError::io(fixtures.display().to_string(), e))?;
    let seed_path = fixtures.join("seed.jsonl");
    let contexts_path = fixtures.join("contexts.jsonl");
    let corpus_path = fixtures.join("corpus.jsonl");
    for (path, content) in [
        (&seed_path, DRY_RUN_SEED),
        (&contexts_path, DRY_RUN_CONTEXTS),
        (&corpus_path, DRY_RUN_CORPUS),
    ] {
        std::fs::write(path, content)
            .map_err(|e| PipelineError::io(path.display().to_string(), e))?;
    }
    Ok(RunInputs {
        seed_path,
        contexts_path,
        db_dir: None,
        corpus_path: Some(corpus_path),
        out_dir: dir.to_path_buf(),
    })
}
