//! Instruction-database persistence.
//!
//! Layout under the database directory:
//!
//! ```text
//! manifest.json        provider, dim, bucket index, ingested source ids
//! buckets/<hash>.jsonl first line bucket meta, then one pool constraint per line
//! embeddings.cache     optional read-through embedding cache (JSONL)
//! ```
//!
//! Buckets are separate JSONL files so the database is diffable and
//! partially reloadable.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use taskweave_core::db::{InstructionDb, PoolConstraint, TaskBucket};
use taskweave_core::embedding::EmbeddingVector;
use taskweave_core::hash::{fnv1a, hex16};

use crate::error::PipelineError;
use crate::jsonl;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BUCKETS_DIR: &str = "buckets";
pub const EMBEDDING_CACHE_FILE: &str = "embeddings.cache";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DbManifest {
    version: u32,
    provider_id: String,
    dim: usize,
    buckets: Vec<BucketIndexEntry>,
    ingested: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BucketIndexEntry {
    key: String,
    task_type: String,
    file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BucketMeta {
    task_type: String,
    task_embedding: EmbeddingVector,
    queries: Vec<String>,
    source_ids: Vec<String>,
}

/// Either a whole-bucket meta line or a pool constraint line.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum BucketLine {
    Constraint(PoolConstraint),
    Meta(BucketMeta),
}

fn bucket_file_name(key: &str) -> String {
    let slug: String = key
        .chars()
        .take(32)
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    format!("{}__{slug}.jsonl", hex16(fnv1a(key.as_bytes())))
}

pub fn save_db(db: &InstructionDb, dir: impl AsRef<Path>) -> Result<(), PipelineError> {
    let dir = dir.as_ref();
    let buckets_dir = dir.join(BUCKETS_DIR);
    std::fs::create_dir_all(&buckets_dir)
        .map_err(|e| PipelineError::io(buckets_dir.display().to_string(), e))?;

    let mut index = Vec::new();
    for (key, bucket) in db.buckets() {
        let file = bucket_file_name(key);
        let mut lines: Vec<BucketLine> = Vec::with_capacity(bucket.constraint_pool.len() + 1);
        lines.push(BucketLine::Meta(BucketMeta {
            task_type: bucket.task_type.clone(),
            task_embedding: bucket.task_embedding.clone(),
            queries: bucket.queries.clone(),
            source_ids: bucket.source_ids.clone(),
        }));
        for pc in &bucket.constraint_pool {
            lines.push(BucketLine::Constraint(pc.clone()));
        }
        jsonl::write_jsonl(buckets_dir.join(&file), &lines)?;
        index.push(BucketIndexEntry {
            key: key.clone(),
            task_type: bucket.task_type.clone(),
            file,
        });
    }

    let manifest = DbManifest {
        version: 1,
        provider_id: db.provider_id().to_string(),
        dim: db.dim(),
        buckets: index,
        ingested: db.ingested_ids().iter().cloned().collect(),
    };
    jsonl::write_json_pretty(dir.join(MANIFEST_FILE), &manifest)
}

pub fn load_db(dir: impl AsRef<Path>) -> Result<InstructionDb, PipelineError> {
    let dir = dir.as_ref();
    let manifest: DbManifest = jsonl::read_json(dir.join(MANIFEST_FILE))?;

    let mut buckets = BTreeMap::new();
    for entry in &manifest.buckets {
        let path = dir.join(BUCKETS_DIR).join(&entry.file);
        let lines: Vec<BucketLine> = jsonl::read_jsonl(&path)?;
        let mut lines = lines.into_iter();
        let meta = match lines.next() {
            Some(BucketLine::Meta(meta)) => meta,
            _ => {
                return Err(PipelineError::Json {
                    path: path.display().to_string(),
                    line: 1,
                    message: "first bucket line must be the bucket meta".to_string(),
                })
            }
        };
        let mut pool = Vec::new();
        for (number, line) in lines.enumerate() {
            match line {
                BucketLine::Constraint(pc) => pool.push(pc),
                BucketLine::Meta(_) => {
                    return Err(PipelineError::Json {
                        path: path.display().to_string(),
                        line: number + 2,
                        message: "unexpected second meta line".to_string(),
                    })
                }
            }
        }
        buckets.insert(
            entry.key.clone(),
            TaskBucket {
                task_type: meta.task_type,
                task_embedding: meta.task_embedding,
                queries: meta.queries,
                constraint_pool: pool,
                source_ids: meta.source_ids,
            },
        );
    }

    let ingested: BTreeSet<String> = manifest.ingested.into_iter().collect();
    Ok(InstructionDb::from_parts(
        manifest.provider_id,
        manifest.dim,
        buckets,
        ingested,
    ))
}

pub fn embedding_cache_path(dir: impl AsRef<Path>) -> PathBuf {
    dir.as_ref().join(EMBEDDING_CACHE_FILE)
}
