//! Offline builders turning attempt logs into training data. Every builder
//! is a pure function of the log content.

use super::{read_attempts, read_runs, AttemptRecord, AttemptType, LogError, ATTEMPTS_FILE, RUNS_FILE};
use crate::premises::{extract_training_pairs, TrainingPair, DEFAULT_NEGATIVES};
use crate::rerank::{awr_weights, build_rewards, StepOutcome, Transition};
use crate::script_model::BlockKind;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Default AWR temperature used when building weighted examples.
pub const DEFAULT_BETA: f64 = 1.0;
/// Seed for negative sampling in premise pairs.
pub const PREMISE_SEED: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    Binary,
    Q,
    Awr,
}

impl LabelMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "binary" => Some(LabelMode::Binary),
            "q" => Some(LabelMode::Q),
            "awr" => Some(LabelMode::Awr),
            _ => None,
        }
    }
}

/// One training row: features, target and sample weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub x: Vec<f64>,
    pub y: f64,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset<T> {
    pub rows: Vec<T>,
    /// 1-based line numbers of malformed records that were skipped.
    pub skipped: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub run_id: String,
    pub solved: bool,
    pub transitions: Vec<Transition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Verified,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairExample {
    pub run_id: String,
    pub seq: u64,
    pub hid: Option<String>,
    pub block_kind: Option<BlockKind>,
    pub stage: Option<u8>,
    pub effective_goal: Option<String>,
    pub counterexamples: Vec<String>,
    pub candidate_fp: Option<String>,
    pub action: String,
    pub verdict: Verdict,
    pub ban_size: Option<usize>,
}

/// Resolve a log path: a directory holds both files, a file is the attempt
/// log with an optional sibling run log.
fn log_files(path: &Path) -> (PathBuf, PathBuf) {
    if path.is_dir() {
        (path.join(ATTEMPTS_FILE), path.join(RUNS_FILE))
    } else {
        let runs = path.parent().map(|p| p.join(RUNS_FILE)).unwrap_or_else(|| PathBuf::from(RUNS_FILE));
        (path.to_path_buf(), runs)
    }
}

struct Loaded {
    attempts: Vec<AttemptRecord>,
    solved: HashMap<String, bool>,
    skipped: Vec<usize>,
}

fn load(path: &Path) -> Result<Loaded, LogError> {
    let (attempts_path, runs_path) = log_files(path);
    let read = read_attempts(&attempts_path)?;
    let mut solved = HashMap::new();
    if runs_path.is_file() && runs_path != attempts_path {
        for r in read_runs(&runs_path)?.records {
            solved.insert(r.run_id.clone(), r.success);
        }
    }
    Ok(Loaded { attempts: read.records, solved, skipped: read.skipped })
}

fn is_search_step(a: &AttemptRecord) -> bool {
    matches!(a.attempt_type, AttemptType::Step | AttemptType::Finisher)
}

/// Records grouped by run in order of first appearance, each sorted by seq.
fn by_run<'a>(attempts: impl Iterator<Item = &'a AttemptRecord>) -> Vec<(String, Vec<&'a AttemptRecord>)> {
    let mut order: Vec<(String, Vec<&AttemptRecord>)> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for a in attempts {
        let i = *index.entry(a.run_id.as_str()).or_insert_with(|| {
            order.push((a.run_id.clone(), Vec::new()));
            order.len() - 1
        });
        order[i].1.push(a);
    }
    for (_, v) in order.iter_mut() {
        v.sort_by_key(|a| a.seq);
    }
    order
}

fn outcome(a: &AttemptRecord) -> StepOutcome {
    StepOutcome {
        state_key: a.prefix_fp.clone(),
        next_state_key: a.result_fp.clone(),
        x: a.features.clone(),
        accepted: a.success,
        depth: a.depth.unwrap_or(0),
        n_before: a.subgoals_before,
        n_after: if a.success { a.subgoals_after } else { None },
    }
}

/// Run outcome from the run log, else whether a finisher succeeded.
fn run_solved(loaded: &Loaded, run_id: &str, records: &[&AttemptRecord]) -> bool {
    loaded.solved.get(run_id).copied().unwrap_or_else(|| {
        records.iter().any(|a| a.attempt_type == AttemptType::Finisher && a.success)
    })
}

fn episodes(loaded: &Loaded, accepted_only: bool) -> Vec<Episode> {
    let steps = loaded
        .attempts
        .iter()
        .filter(|a| is_search_step(a) && a.features.len() == crate::rerank::DIM)
        .filter(|a| !accepted_only || a.success);
    by_run(steps)
        .into_iter()
        .map(|(run_id, records)| {
            let solved = run_solved(loaded, &run_id, &records);
            let outcomes: Vec<StepOutcome> = records.iter().map(|a| outcome(a)).collect();
            Episode { transitions: build_rewards(&outcomes, solved), run_id, solved }
        })
        .collect()
}

pub fn build_reranker_dataset(path: &Path, mode: LabelMode) -> Result<Dataset<Example>, LogError> {
    let loaded = load(path)?;
    let rows = match mode {
        LabelMode::Binary => loaded
            .attempts
            .iter()
            .filter(|a| is_search_step(a) && a.features.len() == crate::rerank::DIM)
            .map(|a| Example { x: a.features.clone(), y: if a.success { 1.0 } else { 0.0 }, w: 1.0 })
            .collect(),
        LabelMode::Q => episodes(&loaded, false)
            .into_iter()
            .flat_map(|e| e.transitions)
            .map(|t| Example { x: t.x, y: t.reward, w: 1.0 })
            .collect(),
        LabelMode::Awr => {
            let ts: Vec<Transition> = episodes(&loaded, false).into_iter().flat_map(|e| e.transitions).collect();
            let ws = awr_weights(&ts, DEFAULT_BETA);
            ts.into_iter()
                .zip(ws)
                .map(|(t, w)| Example { x: t.x, y: if t.accepted { 1.0 } else { 0.0 }, w })
                .collect()
        }
    };
    Ok(Dataset { rows, skipped: loaded.skipped })
}

/// Per-run episodes of accepted search steps, rewards attached.
pub fn build_trajectories(path: &Path) -> Result<Dataset<Episode>, LogError> {
    let loaded = load(path)?;
    let mut rows = episodes(&loaded, true);
    // Runs that logged search attempts but accepted none still get an entry.
    let present: BTreeSet<String> = rows.iter().map(|e| e.run_id.clone()).collect();
    for (run_id, records) in by_run(loaded.attempts.iter().filter(|a| is_search_step(a))) {
        if !present.contains(&run_id) {
            let solved = run_solved(&loaded, &run_id, &records);
            rows.push(Episode { run_id, solved, transitions: vec![] });
        }
    }
    Ok(Dataset { rows, skipped: loaded.skipped })
}

pub fn build_premise_dataset(path: &Path) -> Result<Dataset<TrainingPair>, LogError> {
    let loaded = load(path)?;
    let rows = extract_training_pairs(&loaded.attempts, DEFAULT_NEGATIVES, PREMISE_SEED);
    Ok(Dataset { rows, skipped: loaded.skipped })
}

pub fn build_repair_dataset(path: &Path) -> Result<Dataset<RepairExample>, LogError> {
    let loaded = load(path)?;
    let rows = loaded
        .attempts
        .iter()
        .filter(|a| a.attempt_type == AttemptType::Repair)
        .map(|a| RepairExample {
            run_id: a.run_id.clone(),
            seq: a.seq,
            hid: a.hid.clone(),
            block_kind: a.block_kind,
            stage: a.stage,
            effective_goal: a.effective_goal.clone(),
            counterexamples: a.counterexamples.clone(),
            candidate_fp: a.candidate_fp.clone(),
            action: a.action.clone(),
            verdict: if a.success { Verdict::Verified } else { Verdict::Failed },
            ban_size: a.ban_size,
        })
        .collect();
    Ok(Dataset { rows, skipped: loaded.skipped })
}

/// One JSON object per line.
pub fn write_jsonl<T: Serialize>(rows: &[T], out: &Path) -> Result<(), LogError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(out)?);
    for r in rows {
        let line = serde_json::to_string(r).map_err(|e| LogError::MalformedRecord { line: 0, message: e.to_string() })?;
        writeln!(f, "{line}")?;
    }
    f.flush()?;
    Ok(())
}
