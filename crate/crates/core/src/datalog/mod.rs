//! Append-only JSONL logs of runs and verifier attempts.

pub mod datasets;

use crate::script_model::BlockKind;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::thread::JoinHandle;
use std::time::{SystemTime, UNIX_EPOCH};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;
pub const RUNS_FILE: &str = "runs.jsonl";
pub const ATTEMPTS_FILE: &str = "attempts.jsonl";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log sink unavailable: {0}")]
    SinkUnavailable(String),
    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Process-unique run id.
pub fn new_run_id() -> String {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let n = COUNTER.fetch_add(1, Ordering::SeqCst);
    format!("run-{}-{}-{}", now_ms(), std::process::id(), n)
}

fn version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptType {
    Step,
    Finisher,
    Fill,
    Repair,
    Regeneration,
    /// A state printout or gapped check that is not itself an action.
    Probe,
    /// Checking a sampled outline.
    Outline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    #[serde(default = "version")]
    pub v: u32,
    pub run_id: String,
    pub seq: u64,
    pub attempt_type: AttemptType,
    pub goal: String,
    pub prefix_fp: String,
    pub action: String,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subgoals_before: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subgoals_after: Option<u32>,
    /// Fingerprint of the state reached, for linking transitions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result_fp: Option<String>,
    pub elapsed_ms: u64,
    pub cache_hit: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<u8>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rerank_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_key: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub retrieval_pool: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hints_used: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_kind: Option<BlockKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hid: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective_goal: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub counterexamples: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_fp: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ban_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub timestamp_ms: u64,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl AttemptRecord {
    pub fn new(run_id: &str, attempt_type: AttemptType, goal: &str) -> Self {
        AttemptRecord {
            v: SCHEMA_VERSION,
            run_id: run_id.to_string(),
            seq: 0,
            attempt_type,
            goal: goal.to_string(),
            prefix_fp: String::new(),
            action: String::new(),
            success: false,
            subgoals_before: None,
            subgoals_after: None,
            result_fp: None,
            elapsed_ms: 0,
            cache_hit: false,
            depth: None,
            stage: None,
            features: vec![],
            rerank_score: None,
            order_key: None,
            retrieval_pool: vec![],
            hints_used: vec![],
            block_kind: None,
            tag: None,
            hid: None,
            effective_goal: None,
            counterexamples: vec![],
            candidate_fp: None,
            ban_size: None,
            error: None,
            timestamp_ms: now_ms(),
            extra: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub depth_reached: u32,
    pub expansions: u64,
    #[serde(default)]
    pub fills: u64,
    #[serde(default)]
    pub repairs: u64,
    #[serde(default)]
    pub regenerations: u64,
    #[serde(default)]
    pub outlines: u64,
    #[serde(default)]
    pub verifier_calls: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    #[serde(default = "version")]
    pub v: u32,
    pub run_id: String,
    pub goal_id: String,
    pub goal: String,
    pub mode: String,
    pub config: Value,
    /// Model identifiers keyed by role: `proposer`, `reranker`, `premises`.
    pub models: BTreeMap<String, String>,
    pub runtime_ms: u64,
    pub timeout: bool,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_proof: Option<String>,
    pub stats: RunStats,
    pub timestamp_ms: u64,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl RunRecord {
    /// Empty record; the goal id is the short fingerprint of the goal text.
    pub fn new(run_id: &str, goal: &str, mode: &str) -> Self {
        RunRecord {
            v: SCHEMA_VERSION,
            run_id: run_id.to_string(),
            goal_id: crate::fingerprint::Fingerprint::of(goal).short().into_string(),
            goal: goal.to_string(),
            mode: mode.to_string(),
            config: Value::Null,
            models: BTreeMap::new(),
            runtime_ms: 0,
            timeout: false,
            success: false,
            final_proof: None,
            stats: RunStats::default(),
            timestamp_ms: now_ms(),
            extra: BTreeMap::new(),
        }
    }
}

pub trait LogSink: Send + Sync {
    fn log_run(&self, record: &RunRecord) -> Result<(), LogError>;
    fn log_attempt(&self, record: &AttemptRecord) -> Result<(), LogError>;
    fn flush(&self) -> Result<(), LogError> {
        Ok(())
    }
}

pub struct NullSink;

impl LogSink for NullSink {
    fn log_run(&self, _: &RunRecord) -> Result<(), LogError> {
        Ok(())
    }
    fn log_attempt(&self, _: &AttemptRecord) -> Result<(), LogError> {
        Ok(())
    }
}

#[derive(Default)]
pub struct MemorySink {
    runs: Mutex<Vec<RunRecord>>,
    attempts: Mutex<Vec<AttemptRecord>>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn runs(&self) -> Vec<RunRecord> {
        self.runs.lock().clone()
    }

    pub fn attempts(&self) -> Vec<AttemptRecord> {
        self.attempts.lock().clone()
    }

    pub fn attempts_for(&self, run_id: &str) -> Vec<AttemptRecord> {
        self.attempts.lock().iter().filter(|a| a.run_id == run_id).cloned().collect()
    }
}

impl LogSink for MemorySink {
    fn log_run(&self, record: &RunRecord) -> Result<(), LogError> {
        self.runs.lock().push(record.clone());
        Ok(())
    }
    fn log_attempt(&self, record: &AttemptRecord) -> Result<(), LogError> {
        self.attempts.lock().push(record.clone());
        Ok(())
    }
}

enum Msg {
    Run(String),
    Attempt(String),
    Flush(mpsc::Sender<std::io::Result<()>>),
}

/// `runs.jsonl` and `attempts.jsonl` in one directory, written by a single
/// background thread so lines from concurrent searches never interleave.
pub struct JsonlSink {
    dir: PathBuf,
    tx: Mutex<Option<mpsc::Sender<Msg>>>,
    worker: Mutex<Option<JoinHandle<()>>>,
}

fn open_append(path: &Path) -> std::io::Result<File> {
    OpenOptions::new().create(true).append(true).open(path)
}

impl JsonlSink {
    pub fn open(dir: &Path) -> Result<Self, LogError> {
        std::fs::create_dir_all(dir).map_err(|e| LogError::SinkUnavailable(format!("{}: {e}", dir.display())))?;
        let mut runs = open_append(&dir.join(RUNS_FILE)).map_err(|e| LogError::SinkUnavailable(e.to_string()))?;
        let mut attempts =
            open_append(&dir.join(ATTEMPTS_FILE)).map_err(|e| LogError::SinkUnavailable(e.to_string()))?;
        let (tx, rx) = mpsc::channel::<Msg>();
        let worker = std::thread::spawn(move || {
            for msg in rx {
                match msg {
                    Msg::Run(line) => {
                        let _ = runs.write_all(line.as_bytes());
                    }
                    Msg::Attempt(line) => {
                        let _ = attempts.write_all(line.as_bytes());
                    }
                    Msg::Flush(ack) => {
                        let r = runs.flush().and_then(|_| attempts.flush());
                        let _ = ack.send(r);
                    }
                }
            }
            let _ = runs.flush();
            let _ = attempts.flush();
        });
        Ok(JsonlSink { dir: dir.to_path_buf(), tx: Mutex::new(Some(tx)), worker: Mutex::new(Some(worker)) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn send(&self, msg: Msg) -> Result<(), LogError> {
        let guard = self.tx.lock();
        let tx = guard.as_ref().ok_or_else(|| LogError::SinkUnavailable("sink closed".into()))?;
        tx.send(msg).map_err(|_| LogError::SinkUnavailable("writer thread gone".into()))
    }

    /// Flush and stop the writer.
    pub fn close(&self) -> Result<(), LogError> {
        let r = self.flush();
        self.tx.lock().take();
        if let Some(w) = self.worker.lock().take() {
            let _ = w.join();
        }
        r
    }
}

fn to_line<T: Serialize>(record: &T) -> String {
    let mut line = serde_json::to_string(record).expect("records serialize");
    line.push('\n');
    line
}

impl LogSink for JsonlSink {
    fn log_run(&self, record: &RunRecord) -> Result<(), LogError> {
        self.send(Msg::Run(to_line(record)))
    }

    fn log_attempt(&self, record: &AttemptRecord) -> Result<(), LogError> {
        self.send(Msg::Attempt(to_line(record)))
    }

    fn flush(&self) -> Result<(), LogError> {
        let (ack_tx, ack_rx) = mpsc::channel();
        self.send(Msg::Flush(ack_tx))?;
        ack_rx
            .recv()
            .map_err(|_| LogError::SinkUnavailable("writer thread gone".into()))?
            .map_err(LogError::Io)
    }
}

impl Drop for JsonlSink {
    fn drop(&mut self) {
        let _ = self.close();
    }
}

/// Records parsed from a JSONL file, plus the 1-based numbers of lines that
/// failed to parse.
#[derive(Debug, Clone)]
pub struct ReadOutcome<T> {
    pub records: Vec<T>,
    pub skipped: Vec<usize>,
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<ReadOutcome<T>, LogError> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(r) => records.push(r),
            Err(e) => {
                log::warn!("{}:{}: skipping malformed record: {e}", path.display(), i + 1);
                skipped.push(i + 1);
            }
        }
    }
    Ok(ReadOutcome { records, skipped })
}

pub fn read_attempts(path: &Path) -> Result<ReadOutcome<AttemptRecord>, LogError> {
    read_jsonl(path)
}

pub fn read_runs(path: &Path) -> Result<ReadOutcome<RunRecord>, LogError> {
    read_jsonl(path)
}
