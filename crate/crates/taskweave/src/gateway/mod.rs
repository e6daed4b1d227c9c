//! Uniform access to chat-completion backends.
//!
//! A `Gateway` owns named backends, each a config plus a transport. Every
//! request is labeled with the stage/template name that produced it (the
//! mock keys fixtures on it, and it is handy in errors). Transport
//! failures are retried with exponential backoff up to `max_retries`;
//! malformed model output is never retried here — re-prompting is the
//! caller's policy. Per-backend in-flight requests are capped at
//! `concurrency_limit` by a counting semaphore.

pub mod extract;
pub mod http;
pub mod mock;
pub mod template;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::GatewayError;

fn default_temperature() -> f64 {
    0.0
}
fn default_timeout_ms() -> u64 {
    60_000
}
fn default_concurrency() -> usize {
    4
}
fn default_backoff_ms() -> u64 {
    500
}

/// Which transport a backend uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// OpenAI-style HTTP chat-completion endpoint.
    #[default]
    Http,
    /// Deterministic offline mock (fixtures, scripts, synthesizer).
    Mock,
}

/// Configuration for one model backend.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    pub backend_id: String,
    #[serde(default)]
    pub endpoint: String,
    #[serde(default)]
    pub model_name: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub max_retries: u32,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_concurrency")]
    pub concurrency_limit: usize,
    #[serde(default)]
    pub kind: BackendKind,
    /// Environment variable holding the API key, if the endpoint needs one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    /// JSONL fixture file for mock backends ({"key": ..., "response": ...}).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixtures: Option<String>,
    /// Base backoff for transport retries; attempt n sleeps base << (n-1).
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

impl BackendConfig {
    /// A mock backend with the synthesizer enabled — the offline default.
    pub fn mock(backend_id: impl Into<String>) -> Self {
        let backend_id = backend_id.into();
        BackendConfig {
            model_name: format!("mock-{backend_id}"),
            backend_id,
            endpoint: String::new(),
            temperature: 0.0,
            max_retries: 0,
            timeout_ms: default_timeout_ms(),
            concurrency_limit: default_concurrency(),
            kind: BackendKind::Mock,
            api_key_env: None,
            fixtures: None,
            backoff_ms: 1,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.backend_id.trim().is_empty() {
            return Err(GatewayError::Transport("backend_id is empty".to_string()));
        }
        if self.concurrency_limit < 1 {
            return Err(GatewayError::Transport(format!(
                "backend `{}`: concurrency_limit must be >= 1",
                self.backend_id
            )));
        }
        if self.kind == BackendKind::Http && self.endpoint.trim().is_empty() {
            return Err(GatewayError::Transport(format!(
                "backend `{}`: http backend needs an endpoint",
                self.backend_id
            )));
        }
        Ok(())
    }
}

/// One labeled completion request.
#[derive(Debug, Clone, Copy)]
pub struct ChatRequest<'a> {
    /// Template/stage name; mock fixture keys include it.
    pub label: &'a str,
    pub prompt: &'a str,
}

/// A way to send a prompt to a model and get text back.
pub trait ChatTransport: Send + Sync {
    fn send(
        &self,
        config: &BackendConfig,
        request: &ChatRequest<'_>,
    ) -> Result<String, GatewayError>;
}

/// Counting semaphore; `acquire` blocks until a permit frees up.
struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Semaphore {
            permits: Mutex::new(permits),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.available.wait(permits).unwrap();
        }
        *permits -= 1;
        SemaphoreGuard { semaphore: self }
    }
}

struct SemaphoreGuard<'a> {
    semaphore: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.semaphore.permits.lock().unwrap();
        *permits += 1;
        self.semaphore.available.notify_one();
    }
}

struct BackendEntry {
    config: BackendConfig,
    transport: Arc<dyn ChatTransport>,
    semaphore: Semaphore,
    requests: AtomicUsize,
}

/// Shareable multi-backend client.
pub struct Gateway {
    backends: BTreeMap<String, BackendEntry>,
    /// Swappable for tests; defaults to a real sleep.
    sleeper: Box<dyn Fn(Duration) + Send + Sync>,
}

impl Default for Gateway {
    fn default() -> Self {
        Self::new()
    }
}

impl Gateway {
    pub fn new() -> Self {
        Gateway {
            backends: BTreeMap::new(),
            sleeper: Box::new(std::thread::sleep),
        }
    }

    /// Build the transport implied by the config's kind and register it.
    pub fn register(&mut self, config: BackendConfig) -> Result<(), GatewayError> {
        config.validate()?;
        let transport: Arc<dyn ChatTransport> = match config.kind {
            BackendKind::Http => Arc::new(http::HttpTransport),
            BackendKind::Mock => {
                let mock = mock::MockTransport::new(true);
                if let Some(path) = &config.fixtures {
                    mock.load_fixture_file(path).map_err(|e| {
                        GatewayError::Transport(format!("loading fixtures {path}: {e}"))
                    })?;
                }
                Arc::new(mock)
            }
        };
        self.register_with_transport(config, transport)
    }

    /// Register a backend with an explicit transport (mocks, fakes).
    pub fn register_with_transport(
        &mut self,
        config: BackendConfig,
        transport: Arc<dyn ChatTransport>,
    ) -> Result<(), GatewayError> {
        config.validate()?;
        let semaphore = Semaphore::new(config.concurrency_limit);
        self.backends.insert(
            config.backend_id.clone(),
            BackendEntry {
                config,
                transport,
                semaphore,
                requests: AtomicUsize::new(0),
            },
        );
        Ok(())
    }

    /// For tests: replace the backoff sleep.
    pub fn set_sleeper(&mut self, sleeper: impl Fn(Duration) + Send + Sync + 'static) {
        self.sleeper = Box::new(sleeper);
    }

    pub fn has_backend(&self, backend_id: &str) -> bool {
        self.backends.contains_key(backend_id)
    }

    pub fn config(&self, backend_id: &str) -> Result<&BackendConfig, GatewayError> {
        self.backends
            .get(backend_id)
            .map(|e| &e.config)
            .ok_or_else(|| GatewayError::UnknownBackend(backend_id.to_string()))
    }

    /// Total requests attempted against a backend (including retries).
    pub fn request_count(&self, backend_id: &str) -> usize {
        self.backends
            .get(backend_id)
            .map(|e| e.requests.load(Ordering::Relaxed))
            .unwrap_or(0)
    }

    /// Send a labeled prompt. Holds a concurrency permit for the whole
    /// call; retries retryable failures with exponential backoff.
    pub fn complete(
        &self,
        backend_id: &str,
        label: &str,
        prompt: &str,
    ) -> Result<String, GatewayError> {
        let entry = self
            .backends
            .get(backend_id)
            .ok_or_else(|| GatewayError::UnknownBackend(backend_id.to_string()))?;
        let _permit = entry.semaphore.acquire();
        let request = ChatRequest { label, prompt };
        let mut attempt: u32 = 0;
        loop {
            entry.requests.fetch_add(1, Ordering::Relaxed);
            match entry.transport.send(&entry.config, &request) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retryable() && attempt < entry.config.max_retries => {
                    attempt += 1;
                    let backoff = entry
                        .config
                        .backoff_ms
                        .saturating_mul(1u64 << (attempt - 1).min(16));
                    (self.sleeper)(Duration::from_millis(backoff));
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU32;

    /// Fails with the scripted error a fixed number of times, then
    /// succeeds.
    struct FlakyTransport {
        failures: AtomicU32,
        error: fn() -> GatewayError,
    }

    impl ChatTransport for FlakyTransport {
        fn send(
            &self,
            _config: &BackendConfig,
            _request: &ChatRequest<'_>,
        ) -> Result<String, GatewayError> {
            let remaining = self.failures.load(Ordering::SeqCst);
            if remaining > 0 {
                self.failures.fetch_sub(1, Ordering::SeqCst);
                Err((self.error)())
            } else {
                Ok("ok".to_string())
            }
        }
    }

    fn quiet_gateway() -> Gateway {
        let mut gateway = Gateway::new();
        gateway.set_sleeper(|_| {});
        gateway
    }

    fn config(id: &str, max_retries: u32) -> BackendConfig {
        BackendConfig {
            max_retries,
            backoff_ms: 1,
            ..BackendConfig::mock(id)
        }
    }

    #[test]
    fn rate_limited_twice_then_success_with_two_retries() {
        let mut gateway = quiet_gateway();
        gateway
            .register_with_transport(
                config("b", 2),
                Arc::new(FlakyTransport {
                    failures: AtomicU32::new(2),
                    error: || GatewayError::RateLimited,
                }),
            )
            .unwrap();
        assert_eq!(gateway.complete("b", "t", "p").unwrap(), "ok");
        assert_eq!(gateway.request_count("b"), 3);
    }

    #[test]
    fn transport_error_with_zero_retries_surfaces() {
        let mut gateway = quiet_gateway();
        gateway
            .register_with_transport(
                config("b", 0),
                Arc::new(FlakyTransport {
                    failures: AtomicU32::new(1),
                    error: || GatewayError::Transport("refused".to_string()),
                }),
            )
            .unwrap();
        assert!(matches!(
            gateway.complete("b", "t", "p"),
            Err(GatewayError::Transport(_))
        ));
        assert_eq!(gateway.request_count("b"), 1);
    }

    #[test]
    fn retries_exhausted_surfaces_error() {
        let mut gateway = quiet_gateway();
        gateway
            .register_with_transport(
                config("b", 2),
                Arc::new(FlakyTransport {
                    failures: AtomicU32::new(10),
                    error: || GatewayError::RateLimited,
                }),
            )
            .unwrap();
        assert!(matches!(
            gateway.complete("b", "t", "p"),
            Err(GatewayError::RateLimited)
        ));
        assert_eq!(gateway.request_count("b"), 3);
    }

    #[test]
    fn unknown_backend_rejected() {
        let gateway = quiet_gateway();
        assert!(matches!(
            gateway.complete("ghost", "t", "p"),
            Err(GatewayError::UnknownBackend(_))
        ));
    }

    #[test]
    fn concurrency_limit_is_a_hard_bound() {
        struct CountingTransport {
            current: AtomicUsize,
            peak: AtomicUsize,
        }
        impl ChatTransport for CountingTransport {
            fn send(
                &self,
                _c: &BackendConfig,
                _r: &ChatRequest<'_>,
            ) -> Result<String, GatewayError> {
                let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak.fetch_max(now, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(5));
                self.current.fetch_sub(1, Ordering::SeqCst);
                Ok("ok".to_string())
            }
        }

        let transport = Arc::new(CountingTransport {
            current: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let mut gateway = quiet_gateway();
        let cfg = BackendConfig {
            concurrency_limit: 2,
            ..config("b", 0)
        };
        gateway
            .register_with_transport(cfg, transport.clone())
            .unwrap();

        std::thread::scope(|scope| {
            for _ in 0..8 {
                scope.spawn(|| {
                    gateway.complete("b", "t", "p").unwrap();
                });
            }
        });
        assert!(
            transport.peak.load(Ordering::SeqCst) <= 2,
            "peak {}",
            transport.peak.load(Ordering::SeqCst)
        );
        assert_eq!(gateway.request_count("b"), 8);
    }

    #[test]
    fn invalid_config_rejected() {
        let mut gateway = quiet_gateway();
        let bad = BackendConfig {
            concurrency_limit: 0,
            ..BackendConfig::mock("b")
        };
        assert!(gateway.register(bad).is_err());
        let no_endpoint = BackendConfig {
            kind: BackendKind::Http,
            ..BackendConfig::mock("h")
        };
        assert!(gateway.register(no_endpoint).is_err());
    }
}
