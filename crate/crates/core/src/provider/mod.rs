//! Chat-completion client shared by every backend.
//!
//! A [`Backend`] performs one attempt. [`Client`] wraps it with the retry
//! policy, a per-provider in-flight limit, latency measurement and token
//! accounting.

mod http;
mod mock;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::costing::estimate_tokens;
use crate::prompting::PromptRegistry;

pub use http::{OpenAiBackend, VertexBackend};
pub use mock::{FailurePlan, MockBackend, MockParams};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("environment variable {0} holding the API key is not set")]
    AuthMissing(String),
    #[error("prompt is ~{tokens} tokens, provider limit is {limit}")]
    PromptTooLong { tokens: u64, limit: u64 },
    #[error("invalid provider config \"{name}\": {message}")]
    Config { name: String, message: String },
    #[error("gave up after {attempts} attempts: {last_cause}")]
    Exhausted {
        attempts: u32,
        latency: Duration,
        last_cause: String,
    },
    #[error("request rejected on attempt {attempts}: {cause}")]
    Terminal {
        attempts: u32,
        latency: Duration,
        cause: String,
    },
}

impl ProviderError {
    /// Attempts consumed before the error (0 when nothing was sent).
    pub fn attempts(&self) -> u32 {
        match self {
            ProviderError::Exhausted { attempts, .. } | ProviderError::Terminal { attempts, .. } => *attempts,
            _ => 0,
        }
    }

    pub fn latency(&self) -> Duration {
        match self {
            ProviderError::Exhausted { latency, .. } | ProviderError::Terminal { latency, .. } => *latency,
            _ => Duration::ZERO,
        }
    }
}

/// Outcome of a single attempt as reported by a backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttemptError {
    /// Network failure, HTTP 429 or 5xx. Retried.
    Transient(String),
    /// Per-attempt timeout. Retried.
    Timeout,
    /// Auth or validation rejection. Not retried.
    Terminal(String),
}

impl AttemptError {
    pub fn from_status(status: u16, body: &str) -> Self {
        let msg = format!("HTTP {status}: {}", body.chars().take(200).collect::<String>());
        if status == 429 || (500..600).contains(&status) {
            AttemptError::Transient(msg)
        } else {
            AttemptError::Terminal(msg)
        }
    }

    fn describe(&self) -> String {
        match self {
            AttemptError::Transient(m) | AttemptError::Terminal(m) => m.clone(),
            AttemptError::Timeout => "timed out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RawCompletion {
    pub text: String,
    pub input_tokens: Option<u64>,
    pub output_tokens: Option<u64>,
}

pub trait Backend: Send + Sync {
    /// One request. `attempt` is 1-based.
    fn attempt(&self, prompt: &str, attempt: u32, timeout: Duration) -> Result<RawCompletion, AttemptError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
    pub backoff_multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff_base_ms: 500,
            backoff_multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Delay after the `failed_attempt`-th failure.
    pub fn backoff(&self, failed_attempt: u32) -> Duration {
        let factor = self.backoff_multiplier.powi(failed_attempt.saturating_sub(1) as i32);
        Duration::from_secs_f64(self.backoff_base_ms as f64 / 1000.0 * factor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Decoding {
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for Decoding {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_output_tokens: 512,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    /// OpenAI-compatible `/chat/completions`; also covers self-hosted servers.
    #[serde(rename = "openai")]
    OpenAi,
    /// Vertex AI chat `:predict`.
    Vertex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    #[serde(default)]
    pub name: String,
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_max_input_tokens")]
    pub max_input_tokens: u64,
    #[serde(default = "default_timeout_secs")]
    pub request_timeout_secs: f64,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default)]
    pub decoding: Decoding,
    #[serde(default)]
    pub mock: MockParams,
}

fn default_max_input_tokens() -> u64 {
    1 << 20
}

fn default_timeout_secs() -> f64 {
    120.0
}

fn default_concurrency() -> usize {
    4
}

impl ProviderConfig {
    pub fn mock(name: impl Into<String>, params: MockParams) -> Self {
        Self {
            name: name.into(),
            kind: BackendKind::Mock,
            endpoint: None,
            model: None,
            auth_env: None,
            max_input_tokens: default_max_input_tokens(),
            request_timeout_secs: default_timeout_secs(),
            concurrency: default_concurrency(),
            retry: RetryPolicy::default(),
            decoding: Decoding::default(),
            mock: params,
        }
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.request_timeout_secs)
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        let bad = |message: &str| {
            Err(ProviderError::Config {
                name: self.name.clone(),
                message: message.into(),
            })
        };
        if self.request_timeout_secs.is_nan() || self.request_timeout_secs <= 0.0 {
            return bad("request_timeout_secs must be > 0");
        }
        if self.decoding.temperature.is_nan() || self.decoding.temperature < 0.0 {
            return bad("temperature must be >= 0");
        }
        if self.decoding.max_output_tokens == 0 {
            return bad("max_output_tokens must be >= 1");
        }
        if self.retry.max_attempts == 0 {
            return bad("retry.max_attempts must be >= 1");
        }
        if self.retry.backoff_multiplier.is_nan() || self.retry.backoff_multiplier <= 1.0 {
            return bad("retry.backoff_multiplier must be > 1");
        }
        if self.max_input_tokens == 0 {
            return bad("max_input_tokens must be >= 1");
        }
        if self.concurrency == 0 {
            return bad("concurrency must be >= 1");
        }
        if self.kind != BackendKind::Mock && self.endpoint.is_none() {
            return bad("endpoint is required");
        }
        Ok(())
    }
}

/// Result of a successful call, retries included.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionOutcome {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Wall-clock from the first attempt to the successful response,
    /// including failed attempts and backoff.
    pub latency: Duration,
    /// Duration of the successful attempt alone.
    pub success_latency: Duration,
    pub attempts: u32,
    pub failed_attempts: u32,
}

struct Semaphore {
    free: Mutex<usize>,
    cond: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n),
            cond: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cond.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cond.notify_one();
    }
}

pub struct Client {
    config: ProviderConfig,
    backend: Box<dyn Backend>,
    permits: Semaphore,
    calls: AtomicU64,
}

impl std::fmt::Debug for Client {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Client")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Client {
    /// Builds the backend named by `config.kind`. The mock strips the
    /// instruction text of `registry` templates to find the prompt body.
    pub fn from_config(config: ProviderConfig, registry: &PromptRegistry) -> Result<Self, ProviderError> {
        config.validate()?;
        let api_key = match &config.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| ProviderError::AuthMissing(var.clone()))?),
            None => None,
        };
        let backend: Box<dyn Backend> = match config.kind {
            BackendKind::Mock => Box::new(MockBackend::new(config.mock.clone(), registry.instructions())),
            BackendKind::OpenAi => Box::new(OpenAiBackend::new(&config, api_key)?),
            BackendKind::Vertex => Box::new(VertexBackend::new(&config, api_key)?),
        };
        Ok(Self::with_backend(config, backend))
    }

    pub fn with_backend(config: ProviderConfig, backend: Box<dyn Backend>) -> Self {
        let permits = Semaphore::new(config.concurrency.max(1));
        Self {
            config,
            backend,
            permits,
            calls: AtomicU64::new(0),
        }
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    /// Calls issued so far, retries counted once.
    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn complete(&self, prompt: &str) -> Result<CompletionOutcome, ProviderError> {
        if prompt.trim().is_empty() {
            return Err(ProviderError::EmptyPrompt);
        }
        let estimated = estimate_tokens(prompt);
        if estimated > self.config.max_input_tokens {
            return Err(ProviderError::PromptTooLong {
                tokens: estimated,
                limit: self.config.max_input_tokens,
            });
        }
        self.calls.fetch_add(1, Ordering::Relaxed);
        let policy = &self.config.retry;
        let timeout = self.config.request_timeout();

        let _permit = self.permits.acquire();
        let start = Instant::now();
        let mut attempt_start = start;
        let mut last_cause = String::new();
        for attempt in 1..=policy.max_attempts {
            match self.backend.attempt(prompt, attempt, timeout) {
                Ok(raw) => {
                    let end = Instant::now();
                    let output_tokens = raw.output_tokens.unwrap_or_else(|| estimate_tokens(&raw.text));
                    return Ok(CompletionOutcome {
                        input_tokens: raw.input_tokens.unwrap_or(estimated),
                        output_tokens,
                        text: raw.text,
                        latency: end - start,
                        success_latency: end - attempt_start,
                        attempts: attempt,
                        failed_attempts: attempt - 1,
                    });
                }
                Err(AttemptError::Terminal(cause)) => {
                    return Err(ProviderError::Terminal {
                        attempts: attempt,
                        latency: start.elapsed(),
                        cause,
                    });
                }
                Err(err) => {
                    last_cause = err.describe();
                    tracing::debug!(provider = %self.config.name, attempt, cause = %last_cause, "transient failure");
                    if attempt < policy.max_attempts {
                        std::thread::sleep(policy.backoff(attempt));
                    }
                    attempt_start = Instant::now();
                }
            }
        }
        Err(ProviderError::Exhausted {
            attempts: policy.max_attempts,
            latency: start.elapsed(),
            last_cause,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;
    use std::sync::Arc;

    fn fast_retry(max_attempts: u32) -> RetryPolicy {
        RetryPolicy {
            max_attempts,
            backoff_base_ms: 1,
            backoff_multiplier: 2.0,
        }
    }

    fn mock_client(params: MockParams, retry: RetryPolicy) -> Client {
        let mut cfg = ProviderConfig::mock("mock", params);
        cfg.retry = retry;
        Client::from_config(cfg, &PromptRegistry::default()).unwrap()
    }

    #[test]
    fn mock_is_deterministic() {
        let c = mock_client(MockParams::default(), fast_retry(3));
        let a = c.complete("Summarize the following conversation: a b c").unwrap();
        let b = c.complete("Summarize the following conversation: a b c").unwrap();
        assert_eq!(a.text, "a b c");
        assert_eq!(
            (a.text, a.input_tokens, a.output_tokens),
            (b.text, b.input_tokens, b.output_tokens)
        );
        assert_eq!(a.attempts, 1);
        assert_eq!(a.failed_attempts, 0);
    }

    #[test]
    fn scripted_failures_then_success() {
        let params = MockParams {
            failures: FailurePlan {
                fail_first: 2,
                ..FailurePlan::default()
            },
            ..MockParams::default()
        };
        let out = mock_client(params, fast_retry(3))
            .complete("Summarize the following conversation: x")
            .unwrap();
        assert_eq!((out.attempts, out.failed_attempts), (3, 2));
        assert!(out.latency >= out.success_latency);
    }

    #[test]
    fn exhausted_reports_max_attempts() {
        let params = MockParams {
            failures: FailurePlan {
                fail_first: 5,
                ..FailurePlan::default()
            },
            ..MockParams::default()
        };
        let err = mock_client(params, fast_retry(3)).complete("p: x").unwrap_err();
        assert!(matches!(err, ProviderError::Exhausted { attempts: 3, .. }));
        assert_eq!(err.attempts(), 3);
    }

    #[test]
    fn terminal_failure_not_retried() {
        let params = MockParams {
            failures: FailurePlan {
                fail_first: 1,
                terminal: true,
                ..FailurePlan::default()
            },
            ..MockParams::default()
        };
        let err = mock_client(params, fast_retry(3)).complete("p: x").unwrap_err();
        assert!(matches!(err, ProviderError::Terminal { attempts: 1, .. }));
    }

    #[test]
    fn timeout_is_transient() {
        let mut cfg = ProviderConfig::mock(
            "slow",
            MockParams {
                latency_ms: 50.0,
                ..MockParams::default()
            },
        );
        cfg.request_timeout_secs = 0.005;
        cfg.retry = fast_retry(2);
        let client = Client::from_config(cfg, &PromptRegistry::default()).unwrap();
        let err = client.complete("p: x").unwrap_err();
        assert!(
            matches!(err, ProviderError::Exhausted { attempts: 2, ref last_cause, .. } if last_cause == "timed out")
        );
    }

    #[test]
    fn latency_grows_with_retries() {
        let mut last = Duration::ZERO;
        for fails in 0..3 {
            let params = MockParams {
                latency_ms: 5.0,
                failure_latency_ms: 5.0,
                failures: FailurePlan {
                    fail_first: fails,
                    ..FailurePlan::default()
                },
                ..MockParams::default()
            };
            let out = mock_client(params, fast_retry(4)).complete("p: x").unwrap();
            assert!(out.latency >= last);
            last = out.latency;
        }
    }

    #[test]
    fn rejects_empty_and_overlong_prompts() {
        let mut cfg = ProviderConfig::mock("m", MockParams::default());
        cfg.max_input_tokens = 2;
        let c = Client::from_config(cfg, &PromptRegistry::default()).unwrap();
        assert_eq!(c.complete(" ").unwrap_err(), ProviderError::EmptyPrompt);
        assert!(matches!(
            c.complete("123456789"),
            Err(ProviderError::PromptTooLong { tokens: 3, limit: 2 })
        ));
    }

    #[test]
    fn missing_auth_env() {
        let mut cfg = ProviderConfig::mock("m", MockParams::default());
        cfg.kind = BackendKind::OpenAi;
        cfg.endpoint = Some("http://127.0.0.1:1/v1/chat/completions".into());
        cfg.auth_env = Some("MINUTES_TEST_SURELY_UNSET_KEY".into());
        let err = Client::from_config(cfg, &PromptRegistry::default()).unwrap_err();
        assert_eq!(err, ProviderError::AuthMissing("MINUTES_TEST_SURELY_UNSET_KEY".into()));
    }

    #[test]
    fn config_validation() {
        let mut cfg = ProviderConfig::mock("m", MockParams::default());
        cfg.decoding.temperature = -0.1;
        assert!(cfg.validate().is_err());
        let mut cfg = ProviderConfig::mock("m", MockParams::default());
        cfg.retry.max_attempts = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ProviderConfig::mock("m", MockParams::default());
        cfg.kind = BackendKind::Vertex;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn status_classification() {
        assert!(matches!(AttemptError::from_status(429, ""), AttemptError::Transient(_)));
        assert!(matches!(AttemptError::from_status(503, ""), AttemptError::Transient(_)));
        assert!(matches!(AttemptError::from_status(401, ""), AttemptError::Terminal(_)));
        assert!(matches!(AttemptError::from_status(400, ""), AttemptError::Terminal(_)));
    }

    struct Gauge {
        now: AtomicUsize,
        peak: AtomicUsize,
    }

    impl Backend for Arc<Gauge> {
        fn attempt(&self, _: &str, _: u32, _: Duration) -> Result<RawCompletion, AttemptError> {
            let cur = self.now.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(cur, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(10));
            self.now.fetch_sub(1, Ordering::SeqCst);
            Ok(RawCompletion {
                text: "ok".into(),
                ..RawCompletion::default()
            })
        }
    }

    #[test]
    fn concurrency_limit_bounds_in_flight_calls() {
        let gauge = Arc::new(Gauge {
            now: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let mut cfg = ProviderConfig::mock("g", MockParams::default());
        cfg.concurrency = 2;
        let client = Client::with_backend(cfg, Box::new(gauge.clone()));
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| client.complete("x").unwrap());
            }
        });
        assert!(gauge.peak.load(Ordering::SeqCst) <= 2);
        assert_eq!(client.call_count(), 8);
    }
}
