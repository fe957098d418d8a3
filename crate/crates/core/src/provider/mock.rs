//! Deterministic offline backend.
//!
//! Output is the first `k` words of the prompt body, where the body is the
//! text after the template instruction. Failures are scripted per prompt so
//! results never depend on call order or thread scheduling.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{AttemptError, Backend, RawCompletion};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockParams {
    /// Words echoed back from the prompt body.
    pub k: usize,
    /// Simulated duration of a successful attempt.
    pub latency_ms: f64,
    /// Simulated duration of a failed attempt.
    pub failure_latency_ms: f64,
    pub failures: FailurePlan,
}

impl Default for MockParams {
    fn default() -> Self {
        Self {
            k: 50,
            latency_ms: 0.0,
            failure_latency_ms: 0.0,
            failures: FailurePlan::default(),
        }
    }
}

/// Scripted failures: prompts selected by `every` fail their first
/// `fail_first` attempts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FailurePlan {
    pub fail_first: u32,
    /// Select prompts whose FNV-1a hash is divisible by `every`; 0 and 1
    /// select all prompts.
    pub every: u64,
    /// Fail with a non-retryable error instead of a transient one.
    pub terminal: bool,
}

impl Default for FailurePlan {
    fn default() -> Self {
        Self {
            fail_first: 0,
            every: 1,
            terminal: false,
        }
    }
}

impl FailurePlan {
    pub fn failures_for(&self, prompt: &str) -> u32 {
        if self.fail_first == 0 {
            return 0;
        }
        if self.every <= 1 || fnv1a(prompt.as_bytes()).is_multiple_of(self.every) {
            self.fail_first
        } else {
            0
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    params: MockParams,
    /// Instruction prefixes, longest first.
    instructions: Vec<String>,
}

impl MockBackend {
    pub fn new(params: MockParams, mut instructions: Vec<String>) -> Self {
        instructions.sort_by_key(|s| std::cmp::Reverse(s.len()));
        Self { params, instructions }
    }

    /// Prompt text following the template instruction. Falls back to the
    /// text after the first colon, then to the whole prompt.
    pub fn body<'p>(&self, prompt: &'p str) -> &'p str {
        let body = self
            .instructions
            .iter()
            .find_map(|i| prompt.strip_prefix(i.as_str()))
            .or_else(|| prompt.split_once(':').map(|(_, rest)| rest))
            .unwrap_or(prompt);
        body.trim_start()
    }

    pub fn reply(&self, prompt: &str) -> String {
        self.body(prompt)
            .split_whitespace()
            .take(self.params.k)
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn simulate(ms: f64, timeout: Duration) -> Result<(), AttemptError> {
    if ms <= 0.0 {
        return Ok(());
    }
    let wanted = Duration::from_secs_f64(ms / 1000.0);
    if wanted > timeout {
        std::thread::sleep(timeout);
        return Err(AttemptError::Timeout);
    }
    std::thread::sleep(wanted);
    Ok(())
}

impl Backend for MockBackend {
    fn attempt(&self, prompt: &str, attempt: u32, timeout: Duration) -> Result<RawCompletion, AttemptError> {
        if attempt <= self.params.failures.failures_for(prompt) {
            simulate(self.params.failure_latency_ms, timeout)?;
            let msg = format!("scripted failure on attempt {attempt}");
            return Err(if self.params.failures.terminal {
                AttemptError::Terminal(msg)
            } else {
                AttemptError::Transient(msg)
            });
        }
        simulate(self.params.latency_ms, timeout)?;
        Ok(RawCompletion {
            text: self.reply(prompt),
            input_tokens: None,
            output_tokens: None,
        })
    }
}
