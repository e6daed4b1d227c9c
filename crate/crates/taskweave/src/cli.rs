//! Command-line interface: the six pipeline stages individually, database
//! tooling, diagnostics, and the end-to-end `run-pipeline`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use taskweave_core::bfs::{augment, hop_histogram, BfsParams};
use taskweave_core::constraint::ConstraintRecord;
use taskweave_core::db::{CorpusRecord, InstructionDb};
use taskweave_core::embedding::Embedder;
use taskweave_core::state::InstructionState;

use crate::decomposer::{Decomposer, RawInstruction};
use crate::embed::CachingEmbedder;
use crate::error::PipelineError;
use crate::gateway::BackendConfig;
use crate::jsonl;
use crate::metrics::{diversity_report, on_task_ratio, MetricInput};
use crate::pipeline::{
    self, artifacts, build_handles, write_dry_run_inputs, PipelineConfig, RunInputs, StateRecord,
    TraceLine,
};
use crate::store;
use crate::validator::Thresholds;

/// Exit codes: 0 success, 2 configuration/usage error, 3 stage error with
/// no resumable progress, 4 stage error with completed stages on disk.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_STAGE: i32 = 3;
pub const EXIT_PARTIAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "taskweave",
    about = "Diversify seed instructions over a query/constraint state space and build an SFT-ready dataset",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// Pipeline config JSON; omitted = offline mock defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<PipelineConfig, PipelineError> {
        match &self.config {
            Some(path) => {
                let config: PipelineConfig = jsonl::read_json(path)?;
                config.validate()?;
                Ok(config)
            }
            None => Ok(PipelineConfig::mock_default()),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the task-organized constraint database from a decomposed corpus.
    BuildDb {
        /// Decomposed corpus JSONL ({"id", "result"} records).
        #[arg(long)]
        corpus: PathBuf,
        /// Output database directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Print per-task-type counts and constraint/query ratios.
    DbStats {
        #[arg(long)]
        db: PathBuf,
        /// How many buckets to print, by descending query count.
        #[arg(long, default_value_t = 20)]
        top: usize,
    },
    /// Decompose raw instructions ({"id", "instruction"} JSONL).
    Decompose {
        #[arg(long, value_name = "JSONL")]
        r#in: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Backend id; defaults to the config's decompose stage backend.
        #[arg(long)]
        backend: Option<String>,
        #[arg(long, default_value_t = 3)]
        retry_limit: u32,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Diversify a seed state by breadth-first search over the database.
    Augment {
        /// Seed state JSON ({"task_type", "base_query", "constraints"}).
        #[arg(long)]
        seed: PathBuf,
        #[arg(long)]
        db: PathBuf,
        /// Unique constraint-set collection limit.
        #[arg(long = "K", default_value_t = 2700)]
        unique_limit: usize,
        /// Repetitions of each operator per dequeued state.
        #[arg(long = "m", default_value_t = 10)]
        op_repeats: usize,
        /// Output sample size.
        #[arg(long = "k", default_value_t = 2000)]
        sample_size: usize,
        #[arg(long, default_value_t = 3)]
        max_hops: u32,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
        /// Collect the seed state itself as an output candidate.
        #[arg(long, default_value_t = false)]
        include_seed: bool,
        /// Widen retrieval to the union of the top-n similar buckets'
        /// pools (1 = the single most similar bucket).
        #[arg(long, default_value_t = 1)]
        pool_buckets: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Compose states back into natural-language prompts with repair.
    Compose {
        #[arg(long)]
        states: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        max_retries: u32,
        #[arg(long)]
        backend: Option<String>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Score composed prompts, gate on thresholds, integrate contexts.
    Validate {
        #[arg(long, value_name = "JSONL")]
        r#in: PathBuf,
        #[arg(long)]
        contexts: PathBuf,
        /// validity,self_consistency — e.g. 4,4
        #[arg(long, default_value = "4,4")]
        thresholds: String,
        #[arg(long, default_value_t = 5)]
        fanout: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        backend: Option<String>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Generate candidate responses from a model pool.
    Generate {
        #[arg(long, value_name = "JSONL")]
        r#in: PathBuf,
        /// JSON array of backend configs, in tie-break order.
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score candidates on five dimensions and keep the best per instruction.
    Filter {
        #[arg(long, value_name = "JSONL")]
        r#in: PathBuf,
        /// Judge backend config JSON.
        #[arg(long)]
        judge: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Diversity or on-task diagnostics over states/composed/validated records.
    Metrics {
        #[arg(long, value_name = "JSONL")]
        r#in: PathBuf,
        #[arg(long, value_parser = ["diversity", "ontask"])]
        mode: String,
        /// Seed task description file (required for --mode ontask).
        #[arg(long)]
        seed_task: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        backend: Option<String>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Run all six stages end to end with resumable stage markers.
    RunPipeline {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        seed: Option<PathBuf>,
        #[arg(long)]
        contexts: Option<PathBuf>,
        /// Prebuilt database directory (wins over --corpus).
        #[arg(long)]
        db: Option<PathBuf>,
        /// Decomposed corpus to build the database from.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run the bundled toy fixtures with all-mock backends.
        #[arg(long, default_value_t = false)]
        dry_run: bool,
    },
}

/// Lenient seed-file shape for `augment --seed`.
#[derive(Debug, Deserialize)]
struct SeedFile {
    #[serde(default = "default_seed_id")]
    id: String,
    task_type: String,
    base_query: String,
    #[serde(default)]
    constraints: Vec<SeedConstraint>,
}

fn default_seed_id() -> String {
    "seed".to_string()
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SeedConstraint {
    Text(String),
    Full {
        text: String,
        #[serde(default)]
        category: Option<String>,
        #[serde(default)]
        simplified_query: Option<String>,
    },
}

fn load_seed_state(path: &Path) -> Result<(String, InstructionState), PipelineError> {
    let seed: SeedFile = jsonl::read_json(path)?;
    let mut state = InstructionState::new(seed.task_type, seed.base_query)
        .map_err(|e| PipelineError::Config(format!("seed file {}: {e}", path.display())))?;
    for entry in seed.constraints {
        let record = match entry {
            SeedConstraint::Text(text) => ConstraintRecord::from_label(text, ""),
            SeedConstraint::Full {
                text,
                category,
                simplified_query,
            } => ConstraintRecord::from_label(text, category.as_deref().unwrap_or("")).map(
                |mut r| {
                    r.simplified_query = simplified_query;
                    r
                },
            ),
        }
        .map_err(|e| PipelineError::Config(format!("seed file {}: {e}", path.display())))?;
        if !state.push_constraint(record) {
            return Err(PipelineError::Config(format!(
                "seed file {}: duplicate constraint",
                path.display()
            )));
        }
    }
    Ok((seed.id, state))
}

fn parse_thresholds(raw: &str) -> Result<Thresholds, PipelineError> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(PipelineError::Config(format!(
            "--thresholds wants `v,s`, got `{raw}`"
        )));
    }
    let parse = |s: &str| {
        s.parse::<u8>()
            .map_err(|_| PipelineError::Config(format!("threshold `{s}` is not an integer")))
    };
    let thresholds = Thresholds {
        validity: parse(parts[0])?,
        self_consistency: parse(parts[1])?,
    };
    thresholds.validate().map_err(PipelineError::Config)?;
    Ok(thresholds)
}

/// Pull (text, hop) pairs out of heterogeneous record files: state
/// records, composed records, validated records, or bare {"text", "hop"}.
fn metric_inputs(path: &Path) -> Result<Vec<MetricInput>, PipelineError> {
    let values: Vec<serde_json::Value> = jsonl::read_jsonl(path)?;
    let mut inputs = Vec::with_capacity(values.len());
    for (index, value) in values.iter().enumerate() {
        let hop = value
            .get("hop")
            .or_else(|| value.get("state").and_then(|s| s.get("hop")))
            .and_then(|h| h.as_u64())
            .unwrap_or(0) as u32;
        let text = value
            .get("prompt_text")
            .or_else(|| value.get("instruction"))
            .or_else(|| value.get("text"))
            .and_then(|t| t.as_str())
            .map(str::to_string)
            .or_else(|| {
                value.get("state").map(|state| {
                    let base = state
                        .get("base_query")
                        .and_then(|q| q.as_str())
                        .unwrap_or_default();
                    let constraints: Vec<&str> = state
                        .get("constraints")
                        .and_then(|c| c.as_array())
                        .map(|items| {
                            items
                                .iter()
                                .filter_map(|i| i.get("text").and_then(|t| t.as_str()))
                                .collect()
                        })
                        .unwrap_or_default();
                    if constraints.is_empty() {
                        base.to_string()
                    } else {
                        format!("{base}. Requirements: {}.", constraints.join("; "))
                    }
                })
            });
        match text {
            Some(text) if !text.trim().is_empty() => inputs.push(MetricInput { text, hop }),
            _ => {
                return Err(PipelineError::Json {
                    path: path.display().to_string(),
                    line: index + 1,
                    message: "record has no usable instruction text".to_string(),
                })
            }
        }
    }
    Ok(inputs)
}

/// Dispatch a parsed command. Returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(CliFailure { error, partial }) => {
            eprintln!("error: {error}");
            match error {
                PipelineError::Config(_) | PipelineError::ConfigChanged { .. } => EXIT_CONFIG,
                _ if partial => EXIT_PARTIAL,
                _ => EXIT_STAGE,
            }
        }
    }
}

struct CliFailure {
    error: PipelineError,
    partial: bool,
}

impl From<PipelineError> for CliFailure {
    fn from(error: PipelineError) -> Self {
        CliFailure {
            error,
            partial: false,
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliFailure> {
    match cli.command {
        Command::BuildDb {
            corpus,
            out,
            config,
        } => {
            let config = config.load()?;
            let embedder = CachingEmbedder::new(config.embedding.build());
            let records: Vec<CorpusRecord> = jsonl::read_jsonl(&corpus)?;
            let mut db = InstructionDb::empty(embedder.provider_id(), embedder.dim());
            let report = db.ingest(records, &embedder);
            store::save_db(&db, &out)?;
            embedder.save(store::embedding_cache_path(&out))?;
            println!(
                "built database: {} bucket(s), {} record(s) ingested, {} simple, {} invalid, {} embed failure(s)",
                db.bucket_count(),
                report.records_ingested,
                report.records_simple,
                report.records_invalid,
                report.embedding_failures
            );
            Ok(())
        }
        Command::DbStats { db, top } => {
            let db = store::load_db(&db)?;
            let stats = db.stats();
            println!("total task types: {}", stats.total_buckets);
            println!("total queries: {}", stats.total_queries);
            println!();
            println!("{:<60} | {:>10} | {:>8}", "Task Type", "Queries", "C/Q");
            println!("{}", "-".repeat(84));
            for row in stats.top(top) {
                println!(
                    "{:<60} | {:>10} | {:>8.2}",
                    truncate(&row.task_type, 60),
                    row.query_count,
                    row.constraint_query_ratio
                );
            }
            Ok(())
        }
        Command::Decompose {
            r#in,
            out,
            backend,
            retry_limit,
            config,
        } => {
            let config = config.load()?;
            let handles = build_handles(&config)?;
            let backend = backend.unwrap_or_else(|| config.stages.decompose.clone());
            let decomposer = Decomposer::new(&handles.gateway, &handles.templates, backend)
                .with_retry_limit(retry_limit);
            let records: Vec<RawInstruction> = jsonl::read_jsonl(&r#in)?;
            let (ok, failed) = decomposer.decompose_batch(&records);
            let out_records: Vec<CorpusRecord> = ok
                .into_iter()
                .map(|(id, result)| CorpusRecord { id, result })
                .collect();
            jsonl::write_jsonl(&out, &out_records)?;
            for (id, error) in &failed {
                eprintln!("skipped `{id}`: {error}");
            }
            println!(
                "decomposed {} record(s), skipped {}",
                out_records.len(),
                failed.len()
            );
            Ok(())
        }
        Command::Augment {
            seed,
            db,
            unique_limit,
            op_repeats,
            sample_size,
            max_hops,
            rng_seed,
            include_seed,
            pool_buckets,
            out,
            trace,
            config,
        } => {
            let config = config.load()?;
            let (seed_id, state) = load_seed_state(&seed)?;
            let db_dir = db;
            let db = store::load_db(&db_dir)?;
            // The database dictates the provider; fall back to the
            // matching mock when the configured one differs.
            let configured = CachingEmbedder::new(config.embedding.build());
            let embedder: Arc<CachingEmbedder> = if configured.provider_id() == db.provider_id() {
                Arc::new(configured)
            } else {
                let provider = crate::embed::EmbeddingProviderConfig::Mock { dim: db.dim() };
                let rebuilt = CachingEmbedder::new(provider.build());
                if rebuilt.provider_id() != db.provider_id() {
                    return Err(PipelineError::Config(format!(
                        "database was built with provider `{}`; configure a matching embedding provider",
                        db.provider_id()
                    ))
                    .into());
                }
                Arc::new(rebuilt)
            };
            let cache = store::embedding_cache_path(&db_dir);
            if cache.exists() {
                embedder.load(&cache)?;
            }
            let params = BfsParams {
                unique_limit,
                op_repeats,
                sample_size,
                max_hops,
                rng_seed,
                include_seed,
            };
            params
                .validate()
                .map_err(|e| PipelineError::Config(e.to_string()))?;
            let outcome = if pool_buckets <= 1 {
                augment(&state, &db, &params, embedder.as_ref())
            } else {
                let (_, pool) = db
                    .similar_task_pool(&state.task_type, embedder.as_ref(), pool_buckets)
                    .map_err(|e| PipelineError::stage("augment", &seed_id, e))?;
                taskweave_core::bfs::augment_with_pool(&state, &pool, &params, embedder.as_ref())
            }
            .map_err(|e| PipelineError::stage("augment", &seed_id, e))?;

            let states: Vec<StateRecord> = outcome
                .samples
                .iter()
                .map(|state| StateRecord {
                    seed_id: seed_id.clone(),
                    state_key: state.state_key(),
                    state: state.clone(),
                })
                .collect();
            jsonl::write_jsonl(&out, &states)?;
            if let Some(trace_path) = trace {
                let mut lines = vec![TraceLine::Meta {
                    seed_id: seed_id.clone(),
                    collected: outcome.trace.collected.len(),
                    sampled: outcome.samples.len(),
                    sample_truncated: outcome.trace.sample_truncated,
                    frontier_sizes: outcome.trace.frontiers.iter().map(|f| f.len()).collect(),
                    hop_histogram: hop_histogram(&outcome.trace),
                }];
                for entry in &outcome.trace.op_log {
                    lines.push(TraceLine::Op {
                        seed_id: seed_id.clone(),
                        parent_key: entry.parent_key.clone(),
                        op: entry.op,
                        detail: entry.detail.clone(),
                        child_key: entry.child_key.clone(),
                        hop: entry.hop,
                    });
                }
                jsonl::write_jsonl(&trace_path, &lines)?;
            }
            println!(
                "collected {} unique state(s), sampled {}",
                outcome.trace.collected.len(),
                states.len()
            );
            Ok(())
        }
        Command::Compose {
            states,
            out,
            max_retries,
            backend,
            config,
        } => {
            let mut config = config.load()?;
            config.compose_max_retries = max_retries;
            if let Some(backend) = backend {
                config.stages.compose = backend;
            }
            let handles = build_handles(&config)?;
            let status = pipeline::stage_compose(&config, &handles, &states, &out)?;
            println!(
                "composed {} of {} state(s), {} failed",
                status.output_count, status.input_count, status.discarded
            );
            Ok(())
        }
        Command::Validate {
            r#in,
            contexts,
            thresholds,
            fanout,
            out,
            backend,
            config,
        } => {
            let mut config = config.load()?;
            config.thresholds = parse_thresholds(&thresholds)?;
            config.context_fanout = fanout;
            if let Some(backend) = backend {
                config.stages.validate = backend;
            }
            let handles = build_handles(&config)?;
            let rejected = out.with_extension("rejected.jsonl");
            let status =
                pipeline::stage_validate(&config, &handles, &r#in, &contexts, &out, &rejected)?;
            println!(
                "validated {} prompt(s): {} pair(s) out, {} rejected (rejects in {})",
                status.input_count,
                status.output_count,
                status.discarded,
                rejected.display()
            );
            Ok(())
        }
        Command::Generate { r#in, pool, out } => {
            let pool_configs: Vec<BackendConfig> = jsonl::read_json(&pool)?;
            if pool_configs.is_empty() {
                return Err(
                    PipelineError::Config("pool file lists no backends".to_string()).into(),
                );
            }
            let mut config = PipelineConfig::mock_default();
            config.stages.generation_pool =
                pool_configs.iter().map(|b| b.backend_id.clone()).collect();
            config.backends = pool_configs;
            // Judge/decompose/etc. backends are unused here; point them at
            // the first pool member to pass validation.
            let first = config.stages.generation_pool[0].clone();
            config.stages.decompose = first.clone();
            config.stages.compose = first.clone();
            config.stages.validate = first.clone();
            config.stages.judge = first;
            let handles = build_handles(&config)?;
            let status = pipeline::stage_generate(&config, &handles, &r#in, &out)?;
            println!(
                "generated candidates for {} instruction(s)",
                status.output_count
            );
            Ok(())
        }
        Command::Filter { r#in, judge, out } => {
            let judge_config: BackendConfig = jsonl::read_json(&judge)?;
            let judge_id = judge_config.backend_id.clone();
            let mut config = PipelineConfig::mock_default();
            config.backends = vec![judge_config];
            config.stages.decompose = judge_id.clone();
            config.stages.compose = judge_id.clone();
            config.stages.validate = judge_id.clone();
            config.stages.judge = judge_id.clone();
            config.stages.generation_pool = vec![judge_id];
            let handles = build_handles(&config)?;
            let status = pipeline::stage_filter(&config, &handles, &r#in, &out)?;
            println!(
                "filtered {} instruction(s) into {}",
                status.output_count,
                out.display()
            );
            Ok(())
        }
        Command::Metrics {
            r#in,
            mode,
            seed_task,
            out,
            backend,
            config,
        } => {
            let config = config.load()?;
            let inputs = metric_inputs(&r#in)?;
            match mode.as_str() {
                "diversity" => {
                    let embedder = config.embedding.build();
                    let report = diversity_report(&inputs, embedder.as_ref()).map_err(|e| {
                        PipelineError::stage("metrics", r#in.display().to_string(), e)
                    })?;
                    jsonl::write_json_pretty(&out, &report)?;
                    for hop in &report.hops {
                        println!(
                            "hop {}: mean diversity {:.4} over {} pair(s)",
                            hop.hop, hop.mean, hop.pair_count
                        );
                    }
                    for skipped in &report.skipped {
                        println!(
                            "hop {}: skipped ({} instruction(s), no pairs)",
                            skipped.hop, skipped.count
                        );
                    }
                }
                "ontask" => {
                    let seed_task_path = seed_task.ok_or_else(|| {
                        PipelineError::Config(
                            "--mode ontask requires --seed-task <file>".to_string(),
                        )
                    })?;
                    let description = std::fs::read_to_string(&seed_task_path)
                        .map_err(|e| PipelineError::io(seed_task_path.display().to_string(), e))?;
                    let handles = build_handles(&config)?;
                    let judge = backend.unwrap_or_else(|| config.stages.judge.clone());
                    let report = on_task_ratio(
                        &inputs,
                        description.trim(),
                        &handles.gateway,
                        &handles.templates,
                        &judge,
                    )
                    .map_err(|e| PipelineError::stage("metrics", r#in.display().to_string(), e))?;
                    jsonl::write_json_pretty(&out, &report)?;
                    for hop in &report.hops {
                        println!(
                            "hop {}: on-task {}/{} = {:.3}",
                            hop.hop, hop.on_task, hop.total, hop.ratio
                        );
                    }
                    println!("overall on-task ratio: {:.3}", report.overall_ratio);
                }
                _ => unreachable!("clap enforces the mode values"),
            }
            println!("report written to {}", out.display());
            Ok(())
        }
        Command::RunPipeline {
            config,
            seed,
            contexts,
            db,
            corpus,
            out,
            dry_run,
        } => {
            let (config, inputs) = if dry_run {
                let config = PipelineConfig::mock_default();
                let out_dir = out.unwrap_or_else(|| PathBuf::from("taskweave-dryrun"));
                let inputs = write_dry_run_inputs(&out_dir)?;
                (config, inputs)
            } else {
                let config = config.load()?;
                let seed_path = seed.or_else(|| config.paths.seed.clone()).ok_or_else(|| {
                    PipelineError::Config(
                        "run-pipeline needs --seed (or paths.seed in the config)".to_string(),
                    )
                })?;
                let contexts_path = contexts
                    .or_else(|| config.paths.contexts.clone())
                    .ok_or_else(|| {
                        PipelineError::Config(
                            "run-pipeline needs --contexts (or paths.contexts in the config)"
                                .to_string(),
                        )
                    })?;
                let out_dir = out.or_else(|| config.paths.out.clone()).ok_or_else(|| {
                    PipelineError::Config(
                        "run-pipeline needs --out (or paths.out in the config)".to_string(),
                    )
                })?;
                let inputs = RunInputs {
                    seed_path,
                    contexts_path,
                    db_dir: db.or_else(|| config.paths.db.clone()),
                    corpus_path: corpus.or_else(|| config.paths.corpus.clone()),
                    out_dir,
                };
                (config, inputs)
            };

            let out_dir = inputs.out_dir.clone();
            match pipeline::run_pipeline(&config, &inputs, None) {
                Ok(manifest) => {
                    for stage in &manifest.stages {
                        println!(
                            "stage {:<10} in {:>6} out {:>6} discarded {:>4}",
                            stage.name, stage.input_count, stage.output_count, stage.discarded
                        );
                    }
                    println!("run complete: {}", out_dir.join(artifacts::SFT).display());
                    Ok(())
                }
                Err(error) => {
                    let markers = [
                        artifacts::DECOMPOSED,
                        artifacts::STATES,
                        artifacts::COMPOSED,
                        artifacts::VALIDATED,
                        artifacts::CANDIDATES,
                        artifacts::SFT,
                    ];
                    let partial = markers
                        .iter()
                        .any(|a| out_dir.join(format!("{a}.done")).exists())
                        || out_dir.join(artifacts::BUILD_DB_MARKER).exists();
                    Err(CliFailure { error, partial })
                }
            }
        }
    }
}

fn truncate(text: &str, width: usize) -> String {
    if text.chars().count() <= width {
        text.to_string()
    } else {
        let mut out: String = text.chars().take(width.saturating_sub(1)).collect();
        out.push('…');
        out
    }
}
