//! Proof checking: theory assembly, step and full-script checks, subgoal
//! extraction, refutation and caching over a pluggable backend.

pub mod cache;
pub mod isabelle;
pub mod mock;
pub mod space;

pub use cache::{prefix_fingerprint, CacheKey, GlobalCache, StepCache, DEFAULT_GLOBAL_CAPACITY};
pub use mock::MockBackend;
pub use space::{generate_space, SyntheticSpace};

use crate::script_model::{find_holes, ProofScript};
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};
use thiserror::Error;

pub const THEORY_HEADER: &str = "theory Scratch imports Main begin";
pub const THEORY_FOOTER: &str = "end";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMode {
    Step,
    Finish,
}

impl CheckMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckMode::Step => "step",
            CheckMode::Finish => "finish",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub success: bool,
    pub subgoals: Option<u32>,
    pub state_hint: String,
    /// `(script line index, message)`.
    pub errors: Vec<(usize, String)>,
    pub elapsed_ms: u64,
    pub cache_hit: bool,
}

impl CheckResult {
    pub fn failure(line: usize, message: impl Into<String>) -> Self {
        CheckResult {
            success: false,
            subgoals: None,
            state_hint: String::new(),
            errors: vec![(line, message.into())],
            elapsed_ms: 0,
            cache_hit: false,
        }
    }

    /// Payload equality ignoring `cache_hit` and `elapsed_ms`.
    pub fn same_payload(&self, other: &CheckResult) -> bool {
        self.success == other.success
            && self.subgoals == other.subgoals
            && self.state_hint == other.state_hint
            && self.errors == other.errors
    }
}

/// What a backend reports for one theory. Error lines index theory lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawOutcome {
    pub accepted: bool,
    pub state_hint: String,
    pub errors: Vec<(usize, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CounterexampleSource {
    QuickcheckLike,
    NitpickLike,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub bindings: Vec<(String, String)>,
    pub source: CounterexampleSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("check timed out")]
    Timeout,
    #[error("backend down: {0}")]
    Down(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifierError {
    #[error("theory prefix is empty; it must start with a lemma declaration")]
    EmptyPrefix,
    #[error("verifier timeout")]
    Timeout,
    #[error("backend down: {0}")]
    BackendDown(String),
}

impl From<BackendError> for VerifierError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Timeout => VerifierError::Timeout,
            BackendError::Down(m) => VerifierError::BackendDown(m),
        }
    }
}

pub trait VerifierBackend: Send + Sync {
    fn check_theory(&self, theory: &str, timeout: Duration) -> Result<RawOutcome, BackendError>;

    /// Start a fresh session, dropping any wedged state.
    fn restart(&self) -> Result<(), BackendError>;

    fn refute(&self, goal_or_state: &str, timeout: Duration) -> Option<CounterexampleReport>;

    /// Backends that cannot take concurrent checks return true; callers then
    /// serialize.
    fn requires_serialization(&self) -> bool {
        false
    }

    fn name(&self) -> &str;
}

/// Wrap `prefix` and `candidate` in the scratch theory template.
pub fn assemble_theory(prefix: &[String], candidate: &str, mode: CheckMode) -> Result<String, VerifierError> {
    if prefix.is_empty() {
        return Err(VerifierError::EmptyPrefix);
    }
    let mut out = String::from(THEORY_HEADER);
    for line in prefix {
        out.push('\n');
        out.push_str(line);
    }
    if !candidate.is_empty() {
        out.push('\n');
        out.push_str(candidate);
    }
    if mode == CheckMode::Step {
        out.push_str("\nprint_state\nsorry");
    }
    out.push('\n');
    out.push_str(THEORY_FOOTER);
    Ok(out)
}

/// Remaining subgoals from a printed proof state.
pub fn parse_subgoal_count(state_hint: &str) -> Option<u32> {
    for line in state_hint.lines() {
        let t = line.trim();
        if t.starts_with("No subgoals!") {
            return Some(0);
        }
        if let Some(rest) = t.strip_prefix("goal (") {
            if rest.starts_with("1 subgoal):") {
                return Some(1);
            }
            if let Some((num, tail)) = rest.split_once(' ') {
                if tail.starts_with("subgoals):") {
                    if let Ok(n) = num.parse() {
                        return Some(n);
                    }
                }
            }
        }
    }
    None
}

fn to_script_errors(errors: Vec<(usize, String)>, max_index: usize) -> Vec<(usize, String)> {
    errors
        .into_iter()
        .map(|(line, msg)| (line.saturating_sub(1).min(max_index), msg))
        .collect()
}

fn run_theory(
    backend: &dyn VerifierBackend,
    theory: &str,
    timeout: Duration,
    max_index: usize,
) -> Result<CheckResult, VerifierError> {
    let start = Instant::now();
    let raw = backend.check_theory(theory, timeout)?;
    let elapsed_ms = start.elapsed().as_millis() as u64;
    let errors = to_script_errors(raw.errors, max_index);
    Ok(CheckResult {
        success: raw.accepted && errors.is_empty(),
        subgoals: parse_subgoal_count(&raw.state_hint),
        state_hint: raw.state_hint,
        errors,
        elapsed_ms,
        cache_hit: false,
    })
}

/// Check one candidate after `prefix`, consulting and filling `cache`.
/// Timeouts surface as errors and are never cached.
pub fn check_step(
    backend: &dyn VerifierBackend,
    cache: &StepCache,
    prefix: &[String],
    candidate: &str,
    mode: CheckMode,
    timeout: Duration,
) -> Result<CheckResult, VerifierError> {
    let key = CacheKey::new(prefix, candidate, mode);
    if let Some(mut hit) = cache.lookup(&key) {
        hit.cache_hit = true;
        return Ok(hit);
    }
    let result = check_uncached(backend, prefix, candidate, mode, timeout)?;
    cache.store(key, &result);
    Ok(result)
}

pub fn check_uncached(
    backend: &dyn VerifierBackend,
    prefix: &[String],
    candidate: &str,
    mode: CheckMode,
    timeout: Duration,
) -> Result<CheckResult, VerifierError> {
    let theory = assemble_theory(prefix, candidate, mode)?;
    let candidate_index = prefix.len() + usize::from(!candidate.is_empty()) - 1;
    let max_index = match mode {
        CheckMode::Step => candidate_index + 2,
        CheckMode::Finish => candidate_index,
    };
    let mut result = run_theory(backend, &theory, timeout, max_index)?;
    // Errors raised by the trailing print_state/sorry belong to the candidate.
    for e in result.errors.iter_mut() {
        e.0 = e.0.min(candidate_index);
    }
    Ok(result)
}

/// Check a whole script as a theory. Success requires acceptance and no holes.
pub fn verify_full(
    backend: &dyn VerifierBackend,
    script: &ProofScript,
    timeout: Duration,
) -> Result<CheckResult, VerifierError> {
    let mut result = gapped_check(backend, script, timeout)?;
    if result.success && !find_holes(script).is_empty() {
        result.success = false;
    }
    Ok(result)
}

/// Check a whole script, accepting `sorry` gaps: success iff the backend
/// accepts with no errors.
pub fn gapped_check(
    backend: &dyn VerifierBackend,
    script: &ProofScript,
    timeout: Duration,
) -> Result<CheckResult, VerifierError> {
    let lines = script.lines();
    let theory = assemble_theory(&lines[..1], &lines[1..].join("\n"), CheckMode::Finish)?;
    run_theory(backend, &theory, timeout, script.len().saturating_sub(1))
}

/// Ask the backend for a counterexample. Conservative: nothing on timeout.
pub fn refute(backend: &dyn VerifierBackend, goal_or_state: &str, timeout: Duration) -> Option<CounterexampleReport> {
    backend
        .refute(goal_or_state, timeout)
        .filter(|r| !r.bindings.is_empty())
}
