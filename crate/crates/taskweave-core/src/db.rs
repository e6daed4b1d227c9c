//! The task-organized instruction database: buckets of base queries and
//! deduplicated constraints per task type, with embeddings for retrieval.
//!
//! Buckets are keyed by the canonical form of their task type. Retrieval
//! is exact: `similar_task` and `similar_constraint` are argmax-cosine
//! linear scans with deterministic tie-breaks.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::constraint::{canonicalize_constraint, ConstraintRecord};
use crate::embedding::{cosine, nearest, Embedder, EmbeddingError, EmbeddingVector};
use crate::rng::SplitMix64;
use crate::state::DecompositionResult;

#[derive(Debug, Clone, PartialEq)]
pub enum DbError {
    EmptyDatabase,
    /// Every pool record is excluded; nothing to sample or retrieve.
    PoolExhausted,
    Embedding(EmbeddingError),
}

impl fmt::Display for DbError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DbError::EmptyDatabase => f.write_str("instruction database is empty"),
            DbError::PoolExhausted => f.write_str("constraint pool exhausted by exclusions"),
            DbError::Embedding(e) => write!(f, "embedding failure: {e}"),
        }
    }
}

impl core::error::Error for DbError {}

impl From<EmbeddingError> for DbError {
    fn from(e: EmbeddingError) -> Self {
        DbError::Embedding(e)
    }
}

/// A pool constraint: the record plus its embedding under the DB provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolConstraint {
    pub record: ConstraintRecord,
    pub embedding: EmbeddingVector,
}

/// One task type's slice of the database.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskBucket {
    pub task_type: String,
    pub task_embedding: EmbeddingVector,
    /// Base-query occurrences (duplicates across source records kept).
    pub queries: Vec<String>,
    /// Unique by canonical key.
    pub constraint_pool: Vec<PoolConstraint>,
    pub source_ids: Vec<String>,
}

/// One corpus record heading into ingestion: a stable id plus the
/// decomposition of the original instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub result: DecompositionResult,
}

/// Ingestion bookkeeping.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub records_seen: usize,
    pub records_ingested: usize,
    pub records_already_present: usize,
    pub records_simple: usize,
    pub records_invalid: usize,
    pub tasks_added: usize,
    pub constraints_added: usize,
    pub embedding_failures: usize,
}

/// Per-bucket stats row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketStats {
    pub task_type: String,
    pub query_count: usize,
    pub unique_queries: usize,
    pub unique_constraints: usize,
    /// unique constraints / unique base queries.
    pub constraint_query_ratio: f64,
}

/// Whole-database stats; `buckets` is sorted by descending query count,
/// ties by task type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbStats {
    pub total_buckets: usize,
    pub total_queries: usize,
    pub buckets: Vec<BucketStats>,
}

impl DbStats {
    pub fn top(&self, n: usize) -> &[BucketStats] {
        &self.buckets[..n.min(self.buckets.len())]
    }
}

/// The instruction database.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionDb {
    provider_id: String,
    dim: usize,
    buckets: BTreeMap<String, TaskBucket>,
    /// Source ids already ingested; re-ingesting them is a no-op, which
    /// makes ingestion idempotent.
    ingested: BTreeSet<String>,
}

impl InstructionDb {
    pub fn empty(provider_id: impl Into<String>, dim: usize) -> Self {
        InstructionDb {
            provider_id: provider_id.into(),
            dim,
            buckets: BTreeMap::new(),
            ingested: BTreeSet::new(),
        }
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    pub fn buckets(&self) -> impl Iterator<Item = (&String, &TaskBucket)> {
        self.buckets.iter()
    }

    pub fn bucket(&self, canonical_task_key: &str) -> Option<&TaskBucket> {
        self.buckets.get(canonical_task_key)
    }

    /// Rebuild a database from persisted parts.
    pub fn from_parts(
        provider_id: String,
        dim: usize,
        buckets: BTreeMap<String, TaskBucket>,
        ingested: BTreeSet<String>,
    ) -> Self {
        InstructionDb {
            provider_id,
            dim,
            buckets,
            ingested,
        }
    }

    pub fn into_parts(
        self,
    ) -> (
        String,
        usize,
        BTreeMap<String, TaskBucket>,
        BTreeSet<String>,
    ) {
        (self.provider_id, self.dim, self.buckets, self.ingested)
    }

    pub fn ingested_ids(&self) -> &BTreeSet<String> {
        &self.ingested
    }

    /// Fold decomposed corpus records into the database. One bucket per
    /// distinct canonical task type; constraints deduplicated per bucket;
    /// records whose id was already ingested are skipped, so re-ingesting
    /// the same corpus yields an identical database. Embedding failures
    /// skip the affected record and are counted, never fatal.
    pub fn ingest<I>(&mut self, records: I, embedder: &dyn Embedder) -> IngestReport
    where
        I: IntoIterator<Item = CorpusRecord>,
    {
        let mut report = IngestReport::default();
        for record in records {
            report.records_seen += 1;
            if self.ingested.contains(&record.id) {
                report.records_already_present += 1;
                continue;
            }
            if record.result.validate().is_err() {
                report.records_invalid += 1;
                continue;
            }
            if !record.result.complex {
                report.records_simple += 1;
                self.ingested.insert(record.id);
                continue;
            }
            match self.ingest_tasks(&record, embedder, &mut report) {
                Ok(()) => {
                    self.ingested.insert(record.id);
                    report.records_ingested += 1;
                }
                Err(_) => {
                    report.embedding_failures += 1;
                }
            }
        }
        report
    }

    fn ingest_tasks(
        &mut self,
        record: &CorpusRecord,
        embedder: &dyn Embedder,
        report: &mut IngestReport,
    ) -> Result<(), EmbeddingError> {
        // Embed everything first so a failure cannot leave a half-ingested
        // record behind.
        let mut prepared = Vec::new();
        for task in &record.result.tasks {
            let task_type = if task.task_type.trim().is_empty() {
                "Unspecified"
            } else {
                task.task_type.as_str()
            };
            let key = canonicalize_constraint(task_type);
            let task_embedding = if self.buckets.contains_key(&key) {
                None
            } else {
                Some(embedder.embed(task_type)?)
            };
            let mut constraints = Vec::new();
            for c in &task.constraints {
                constraints.push((c.clone(), embedder.embed(&c.text)?));
            }
            prepared.push((
                key,
                task_type.to_string(),
                task_embedding,
                task.base_query.clone(),
                constraints,
            ));
        }

        for (key, task_type, task_embedding, base_query, constraints) in prepared {
            let bucket = self.buckets.entry(key).or_insert_with(|| {
                report.tasks_added += 1;
                TaskBucket {
                    task_type,
                    task_embedding: task_embedding.expect("embedding computed for new bucket"),
                    queries: Vec::new(),
                    constraint_pool: Vec::new(),
                    source_ids: Vec::new(),
                }
            });
            bucket.queries.push(base_query);
            if bucket.source_ids.last() != Some(&record.id) {
                bucket.source_ids.push(record.id.clone());
            }
            for (rec, embedding) in constraints {
                if bucket
                    .constraint_pool
                    .iter()
                    .any(|p| p.record.canonical_key == rec.canonical_key)
                {
                    continue;
                }
                bucket.constraint_pool.push(PoolConstraint {
                    record: rec,
                    embedding,
                });
                report.constraints_added += 1;
            }
        }
        Ok(())
    }

    /// The single bucket most similar to `task_type`: an exact canonical
    /// match short-circuits (self-similarity is maximal anyway); otherwise
    /// argmax cosine over bucket embeddings with ascending-key tie-break.
    pub fn similar_task(
        &self,
        task_type: &str,
        embedder: &dyn Embedder,
    ) -> Result<&TaskBucket, DbError> {
        if self.buckets.is_empty() {
            return Err(DbError::EmptyDatabase);
        }
        let key = canonicalize_constraint(task_type);
        if let Some(bucket) = self.buckets.get(&key) {
            return Ok(bucket);
        }
        let query = embedder.embed(task_type)?;
        let hits = nearest(
            &query,
            self.buckets
                .iter()
                .map(|(k, b)| (k.as_str(), &b.task_embedding)),
            1,
        )?;
        Ok(self
            .buckets
            .get(&hits[0].id)
            .expect("nearest returned a live key"))
    }

    /// Widened retrieval for experimentation: the union of the top
    /// `pool_width` buckets' constraint pools (first occurrence of a
    /// canonical key wins), returned alongside the nearest bucket. With
    /// `pool_width = 1` this is exactly `similar_task`'s pool.
    pub fn similar_task_pool(
        &self,
        task_type: &str,
        embedder: &dyn Embedder,
        pool_width: usize,
    ) -> Result<(&TaskBucket, Vec<PoolConstraint>), DbError> {
        let primary = self.similar_task(task_type, embedder)?;
        if pool_width <= 1 {
            return Ok((primary, primary.constraint_pool.clone()));
        }
        let query = embedder.embed(task_type)?;
        let hits = nearest(
            &query,
            self.buckets
                .iter()
                .map(|(k, b)| (k.as_str(), &b.task_embedding)),
            pool_width,
        )?;
        let mut seen = BTreeSet::new();
        let mut pool = Vec::new();
        let primary_key = canonicalize_constraint(&primary.task_type);
        let ordered = core::iter::once(primary_key.as_str()).chain(
            hits.iter()
                .map(|h| h.id.as_str())
                .filter(|id| *id != primary_key.as_str()),
        );
        for key in ordered {
            if let Some(bucket) = self.buckets.get(key) {
                for pc in &bucket.constraint_pool {
                    if seen.insert(pc.record.canonical_key.clone()) {
                        pool.push(pc.clone());
                    }
                }
            }
        }
        Ok((primary, pool))
    }

    /// Exact counts over the database.
    pub fn stats(&self) -> DbStats {
        let mut rows: Vec<BucketStats> = self
            .buckets
            .values()
            .map(|bucket| {
                let unique_queries = bucket.queries.iter().collect::<BTreeSet<_>>().len();
                let unique_constraints = bucket.constraint_pool.len();
                BucketStats {
                    task_type: bucket.task_type.clone(),
                    query_count: bucket.queries.len(),
                    unique_queries,
                    unique_constraints,
                    constraint_query_ratio: if unique_queries == 0 {
                        0.0
                    } else {
                        unique_constraints as f64 / unique_queries as f64
                    },
                }
            })
            .collect();
        rows.sort_by(|a, b| {
            b.query_count
                .cmp(&a.query_count)
                .then_with(|| a.task_type.cmp(&b.task_type))
        });
        DbStats {
            total_buckets: self.buckets.len(),
            total_queries: rows.iter().map(|r| r.query_count).sum(),
            buckets: rows,
        }
    }
}

/// Uniform draw from the pool records whose canonical key is not excluded.
pub fn sample_constraint<'a>(
    pool: &'a [PoolConstraint],
    rng: &mut SplitMix64,
    exclude: &BTreeSet<String>,
) -> Result<&'a PoolConstraint, DbError> {
    let eligible: Vec<&PoolConstraint> = pool
        .iter()
        .filter(|p| !exclude.contains(&p.record.canonical_key))
        .collect();
    if eligible.is_empty() {
        return Err(DbError::PoolExhausted);
    }
    Ok(eligible[rng.gen_range(eligible.len())])
}

/// The eligible pool record most similar to `target`; ties broken by
/// ascending canonical key.
pub fn similar_constraint<'a>(
    pool: &'a [PoolConstraint],
    target: &EmbeddingVector,
    exclude: &BTreeSet<String>,
) -> Result<&'a PoolConstraint, DbError> {
    let mut best: Option<(&PoolConstraint, f64)> = None;
    for candidate in pool {
        if exclude.contains(&candidate.record.canonical_key) {
            continue;
        }
        let score = cosine(target, &candidate.embedding)?;
        best = match best {
            None => Some((candidate, score)),
            Some((cur, cur_score)) => {
                if score > cur_score
                    || (score == cur_score
                        && candidate.record.canonical_key < cur.record.canonical_key)
                {
                    Some((candidate, score))
                } else {
                    Some((cur, cur_score))
                }
            }
        };
    }
    best.map(|(c, _)| c).ok_or(DbError::PoolExhausted)
}
