//! Per-run verifier facade. Every evaluation goes through a [`RunContext`],
//! which consults the cache, serializes access when the backend asks for it,
//! restarts a failed backend and writes exactly one attempt record.

use crate::datalog::{AttemptRecord, AttemptType, LogSink};
use crate::fingerprint::state_fingerprint;
use crate::script_model::{find_holes, ProofScript};
use crate::verifier::{
    check_uncached, gapped_check, prefix_fingerprint, CacheKey, CheckMode, CheckResult, CounterexampleReport,
    StepCache, VerifierBackend, VerifierError,
};
use parking_lot::Mutex;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

pub const DEFAULT_CHECK_TIMEOUT: Duration = Duration::from_secs(10);

pub struct RunContext<'a> {
    run_id: String,
    backend: &'a dyn VerifierBackend,
    sink: &'a dyn LogSink,
    cache: StepCache,
    timeout: Duration,
    serial: Option<Mutex<()>>,
    seq: AtomicU64,
    evaluations: AtomicU64,
    backend_calls: AtomicU64,
    restarts: AtomicU64,
    started: Instant,
}

impl<'a> RunContext<'a> {
    pub fn new(run_id: &str, backend: &'a dyn VerifierBackend, sink: &'a dyn LogSink, cache: StepCache) -> Self {
        RunContext {
            run_id: run_id.to_string(),
            backend,
            sink,
            cache,
            timeout: DEFAULT_CHECK_TIMEOUT,
            serial: backend.requires_serialization().then(|| Mutex::new(())),
            seq: AtomicU64::new(0),
            evaluations: AtomicU64::new(0),
            backend_calls: AtomicU64::new(0),
            restarts: AtomicU64::new(0),
            started: Instant::now(),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn backend(&self) -> &dyn VerifierBackend {
        self.backend
    }

    pub fn sink(&self) -> &dyn LogSink {
        self.sink
    }

    pub fn cache(&self) -> &StepCache {
        &self.cache
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    pub fn elapsed(&self) -> Duration {
        self.started.elapsed()
    }

    /// Evaluations performed, cache hits included. Equals the number of
    /// attempt records written by this context.
    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::SeqCst)
    }

    /// Evaluations that reached the backend.
    pub fn backend_calls(&self) -> u64 {
        self.backend_calls.load(Ordering::SeqCst)
    }

    pub fn restarts(&self) -> u64 {
        self.restarts.load(Ordering::SeqCst)
    }

    /// Fresh record template for this run.
    pub fn record(&self, attempt_type: AttemptType, goal: &str) -> AttemptRecord {
        AttemptRecord::new(&self.run_id, attempt_type, goal)
    }

    pub fn is_cached(&self, prefix: &[String], candidate: &str, mode: CheckMode) -> bool {
        self.cache.contains(&CacheKey::new(prefix, candidate, mode))
    }

    /// Run `f` against the backend with serialization, panic capture and a
    /// single restart-and-retry when the backend is down.
    fn call_backend<F>(&self, f: F) -> Result<CheckResult, VerifierError>
    where
        F: Fn() -> Result<CheckResult, VerifierError>,
    {
        let attempt = || {
            let _guard = self.serial.as_ref().map(|m| m.lock());
            self.backend_calls.fetch_add(1, Ordering::SeqCst);
            match catch_unwind(AssertUnwindSafe(&f)) {
                Ok(r) => r,
                Err(_) => Err(VerifierError::BackendDown("backend panicked".into())),
            }
        };
        match attempt() {
            Err(VerifierError::BackendDown(msg)) => {
                log::warn!("backend down ({msg}); restarting");
                self.restart_backend();
                attempt()
            }
            other => other,
        }
    }

    pub fn restart_backend(&self) {
        self.restarts.fetch_add(1, Ordering::SeqCst);
        let _guard = self.serial.as_ref().map(|m| m.lock());
        if let Err(e) = self.backend.restart() {
            log::error!("backend restart failed: {e}");
        }
    }

    /// Cached evaluation of one candidate after `prefix`, logged under
    /// `template` (whose type, depth, features etc. are kept as given).
    pub fn check(&self, prefix: &[String], candidate: &str, mode: CheckMode, template: AttemptRecord) -> CheckResult {
        let key = CacheKey::new(prefix, candidate, mode);
        let (result, error) = match self.cache.lookup(&key) {
            Some(mut hit) => {
                hit.cache_hit = true;
                (hit, None)
            }
            None => match self.call_backend(|| check_uncached(self.backend, prefix, candidate, mode, self.timeout)) {
                Ok(r) => {
                    self.cache.store(key, &r);
                    (r, None)
                }
                Err(e) => (failed(prefix.len(), &e), Some(e.to_string())),
            },
        };
        self.log(template, prefix, candidate, &result, error);
        result
    }

    /// Whole-script check accepting holes; cached under the full line list.
    pub fn gapped(&self, script: &ProofScript, template: AttemptRecord) -> CheckResult {
        let lines = script.lines();
        let key = CacheKey::new(lines, "", CheckMode::Finish);
        let (result, error) = match self.cache.lookup(&key) {
            Some(mut hit) => {
                hit.cache_hit = true;
                (hit, None)
            }
            None => match self.call_backend(|| gapped_check(self.backend, script, self.timeout)) {
                Ok(r) => {
                    self.cache.store(key, &r);
                    (r, None)
                }
                Err(e) => (failed(lines.len().saturating_sub(1), &e), Some(e.to_string())),
            },
        };
        let header = &lines[..1.min(lines.len())];
        let body = lines.get(1..).map(|l| l.join("\n")).unwrap_or_default();
        self.log(template, header, &body, &result, error);
        result
    }

    /// Gapped check plus the no-holes requirement.
    pub fn verify_full(&self, script: &ProofScript, template: AttemptRecord) -> CheckResult {
        let holes = !find_holes(script).is_empty();
        let mut template = template;
        if holes {
            template.extra.insert("holes".into(), serde_json::Value::Bool(true));
        }
        let mut r = self.gapped(script, template);
        if holes {
            r.success = false;
        }
        r
    }

    /// Counterexample search; not an attempt, so not logged.
    pub fn refute(&self, text: &str) -> Option<CounterexampleReport> {
        let _guard = self.serial.as_ref().map(|m| m.lock());
        match catch_unwind(AssertUnwindSafe(|| crate::verifier::refute(self.backend, text, self.timeout))) {
            Ok(r) => r,
            Err(_) => {
                drop(_guard);
                self.restart_backend();
                None
            }
        }
    }

    fn log(&self, mut rec: AttemptRecord, prefix: &[String], action: &str, result: &CheckResult, error: Option<String>) {
        self.evaluations.fetch_add(1, Ordering::SeqCst);
        rec.seq = self.seq.fetch_add(1, Ordering::SeqCst);
        rec.run_id = self.run_id.clone();
        rec.prefix_fp = prefix_fingerprint(prefix).into_string();
        if rec.action.is_empty() {
            rec.action = action.to_string();
        }
        rec.success = result.success && !rec.extra.contains_key("holes");
        rec.subgoals_after = result.subgoals;
        rec.result_fp = (result.success && !result.state_hint.is_empty())
            .then(|| state_fingerprint(&result.state_hint).into_string());
        rec.elapsed_ms = result.elapsed_ms;
        rec.cache_hit = result.cache_hit;
        if rec.error.is_none() {
            rec.error = error.or_else(|| result.errors.first().map(|(_, m)| m.clone()));
        }
        rec.timestamp_ms = crate::datalog::now_ms();
        if let Err(e) = self.sink.log_attempt(&rec) {
            log::warn!("dropping attempt record: {e}");
        }
    }
}

fn failed(line: usize, e: &VerifierError) -> CheckResult {
    CheckResult::failure(line, e.to_string())
}
