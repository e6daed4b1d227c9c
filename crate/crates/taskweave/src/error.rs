//! Error types for the IO-facing half of the pipeline.

use thiserror::Error;

/// Gateway-level failures: templating, transport, and model-output JSON.
#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("missing template variable `{0}`")]
    MissingVariable(String),
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("unknown backend `{0}`")]
    UnknownBackend(String),
    #[error("request timed out after {0} ms")]
    Timeout(u64),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited")]
    RateLimited,
    #[error("no JSON object or array found in model output")]
    NoJsonFound,
    #[error("malformed JSON in model output: {0}")]
    MalformedJson(String),
    #[error("no mock fixture for key `{0}`")]
    NoFixture(String),
}

impl GatewayError {
    /// Transport-level failures are retried with backoff; everything else
    /// surfaces immediately. Malformed model output is a caller policy
    /// (re-prompt), not a transport retry.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            GatewayError::Timeout(_) | GatewayError::Transport(_) | GatewayError::RateLimited
        )
    }
}

/// Decomposition-stage failures.
#[derive(Debug, Error)]
pub enum DecomposeError {
    #[error("instruction is empty")]
    EmptyInstruction,
    #[error("decomposition failed after {attempts} malformed response(s): {last_error}")]
    Failed { attempts: u32, last_error: String },
    #[error("seed decomposed into {0} tasks; augmentation seeds must decompose into exactly one task — split the seed instruction")]
    SeedNotSingleTask(usize),
    #[error("seed instruction is simple (no constraints found); nothing to augment")]
    SeedSimple,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Composition-stage failures (the repair loop itself never fails; these
/// are per-call errors it absorbs).
#[derive(Debug, Error)]
pub enum ComposeError {
    #[error("compose output unparseable: {0}")]
    ComposeParse(String),
    #[error("verification output unparseable: {0}")]
    VerifyParse(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Validation-stage failures.
#[derive(Debug, Error)]
pub enum ValidateError {
    #[error("score unparseable: {0}")]
    ScoreParse(String),
    #[error("prompt contains placeholder(s) {found:?} but expected `{expected}`")]
    PlaceholderMismatch {
        found: Vec<String>,
        expected: String,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Response-generation and filtering failures.
#[derive(Debug, Error)]
pub enum ResponseError {
    #[error("all {attempted} pool model(s) failed; last error: {last_error}")]
    AllModelsFailed {
        attempted: usize,
        last_error: String,
    },
    #[error("no candidates to select from")]
    EmptyCandidates,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Pipeline orchestration failures.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("stage `{stage}` failed on record `{record}`: {message}")]
    Stage {
        stage: &'static str,
        record: String,
        message: String,
    },
    #[error("run directory holds a manifest for a different configuration (hash {found}, expected {expected}); use a fresh --out directory or the original config")]
    ConfigChanged { found: String, expected: String },
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad JSON in {path} line {line}: {message}")]
    Json {
        path: String,
        line: usize,
        message: String,
    },
}

impl PipelineError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn stage(stage: &'static str, record: impl Into<String>, message: impl ToString) -> Self {
        PipelineError::Stage {
            stage,
            record: record.into(),
            message: message.to_string(),
        }
    }
}
