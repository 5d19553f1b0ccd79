//! Outline-first proving: sample structured outlines with `sorry` holes,
//! then close holes by stepwise filling and staged block repair, with
//! whole-outline regeneration as the last resort.

use crate::datalog::{AttemptType, LogSink, RunRecord};
use crate::hints::{combine_hints, context_hints_from_state, hint_bonus, lexicon_hints, HintLexicon, HintSet};
use crate::proposer::{section, system_prompt, temperature, ProposalMode, ProposerBackend};
use crate::script_model::{
    block_fingerprint, block_spans, find_holes, hid, indent_of, is_apply_legal, lemma_line, normalize_outline,
    open_minimal_sorries, probe_at_hole, replace_span, script_digest, strip_to_type, BlockKind, BlockSpan, Hole,
    ProofScript,
};
use crate::session::RunContext;
use crate::stepwise::{prove_tagged, Guidance, SearchConfig};
use crate::verifier::{CheckMode, CheckResult, StepCache, VerifierBackend};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet, VecDeque};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("invalid planner config: {0}")]
    InvalidConfig(String),
    #[error("goal is empty")]
    EmptyGoal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    Outline,
    Auto,
}

impl PlanMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "outline" => Some(PlanMode::Outline),
            "auto" => Some(PlanMode::Auto),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub mode: PlanMode,
    pub samples_per_temp: usize,
    pub temperatures: Vec<f64>,
    pub enforce_holes: bool,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub c1: u32,
    pub c2: u32,
    /// Seconds of stepwise search per fill.
    pub fill_budget: f64,
    pub fill_beam: usize,
    pub fill_depth: u32,
    /// Seconds per repair invocation.
    pub repair_budget: f64,
    /// Proposer calls per repair invocation.
    pub repair_rounds: usize,
    /// Global wall-clock budget in seconds.
    pub budget: f64,
    pub k_ctx: usize,
    pub k_lex: usize,
    pub k_hint: usize,
    pub ban_max: usize,
    pub regeneration_cap: u32,
    pub anchor_window: usize,
    pub check_timeout: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            mode: PlanMode::Auto,
            samples_per_temp: 2,
            temperatures: vec![0.3, 0.7],
            enforce_holes: true,
            alpha: 10.0,
            beta: 1.0,
            gamma: 1.0,
            c1: 2,
            c2: 3,
            fill_budget: 15.0,
            fill_beam: 2,
            fill_depth: 3,
            repair_budget: 20.0,
            repair_rounds: 4,
            budget: 300.0,
            k_ctx: crate::hints::DEFAULT_K_CTX,
            k_lex: crate::hints::DEFAULT_K_LEX,
            k_hint: crate::hints::DEFAULT_K_HINT,
            ban_max: 8,
            regeneration_cap: 2,
            anchor_window: 20,
            check_timeout: 10.0,
        }
    }
}

impl PlannerConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN too
    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |m: &str| Err(PlanError::InvalidConfig(m.to_string()));
        if self.c1 < 1 || self.c2 < 1 {
            return bad("stage caps must be at least 1");
        }
        if self.temperatures.is_empty() {
            return bad("temperatures must be non-empty");
        }
        if self.samples_per_temp < 1 {
            return bad("samples per temperature must be at least 1");
        }
        if !(self.fill_budget > 0.0) || !(self.repair_budget > 0.0) || !(self.check_timeout > 0.0) {
            return bad("fill, repair and check budgets must be positive");
        }
        if !(self.budget >= 0.0) || !self.budget.is_finite() {
            return bad("global budget must be non-negative");
        }
        if self.fill_beam < 1 || self.fill_depth < 1 || self.ban_max < 1 || self.repair_rounds < 1 {
            return bad("fill beam, fill depth, ban list size and repair rounds must be at least 1");
        }
        Ok(())
    }
}

/// Per-run repair bookkeeping.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlannerState {
    pub stage: HashMap<String, u8>,
    pub tries: HashMap<(String, u8), u32>,
    pub focus: Option<String>,
    /// Recent failed block fingerprints per (hid, kind), oldest first.
    pub bans: HashMap<(String, BlockKind), VecDeque<String>>,
    /// Set when a hole exhausts stage 2.
    pub regenerate: bool,
}

impl PlannerState {
    pub fn stage_of(&self, hid: &str) -> u8 {
        self.stage.get(hid).copied().unwrap_or(0)
    }

    pub fn tries_of(&self, hid: &str, stage: u8) -> u32 {
        self.tries.get(&(hid.to_string(), stage)).copied().unwrap_or(0)
    }

    pub fn is_banned(&self, hid: &str, kind: BlockKind, fp: &str) -> bool {
        self.bans.get(&(hid.to_string(), kind)).is_some_and(|l| l.iter().any(|f| f == fp))
    }

    pub fn ban_len(&self, hid: &str, kind: BlockKind) -> usize {
        self.bans.get(&(hid.to_string(), kind)).map_or(0, VecDeque::len)
    }

    pub fn ban(&mut self, hid: &str, kind: BlockKind, fp: &str, max: usize) {
        let list = self.bans.entry((hid.to_string(), kind)).or_default();
        if list.iter().any(|f| f == fp) {
            return;
        }
        list.push_back(fp.to_string());
        while list.len() > max {
            list.pop_front();
        }
    }

    /// Record one failed iteration on `hid`; stage 0 counts as stage 1.
    pub fn record_failure(&mut self, hid: &str) {
        let s = self.stage_of(hid).max(1);
        *self.tries.entry((hid.to_string(), s)).or_insert(0) += 1;
    }
}

/// Stage 1 → 2 after `c1` stage-1 failures; `c2` stage-2 failures set the
/// regeneration trigger.
pub fn escalate(state: &mut PlannerState, hid: &str, c1: u32, c2: u32) {
    let stage = state.stage_of(hid);
    if stage <= 1 && state.tries_of(hid, 1) >= c1 {
        state.stage.insert(hid.to_string(), 2);
    } else if stage == 2 && state.tries_of(hid, 2) >= c2 {
        state.regenerate = true;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FillOutcome {
    Verified(ProofScript),
    Partial(ProofScript, Vec<Hole>),
    NoChange,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RepairOutcome {
    Verified(ProofScript),
    Partial(ProofScript, String),
    NoChange,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub solved: bool,
    pub script: ProofScript,
    pub outlines_sampled: u64,
    pub fills_attempted: u64,
    pub repairs_attempted: u64,
    pub regenerations: u64,
    pub elapsed: Duration,
    pub timed_out: bool,
}

impl PlanResult {
    pub fn holes_remaining(&self) -> usize {
        find_holes(&self.script).len()
    }
}

/// What the driver did in one iteration, for audits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanStep {
    Initial,
    Verified,
    Partial,
    NoChange,
    Regenerated,
}

pub struct PlanEvent<'e> {
    pub iteration: u64,
    pub step: PlanStep,
    pub script: &'e ProofScript,
    pub hid: Option<&'e str>,
}

/// Proposers and optional knowledge used by the planner.
#[derive(Clone, Copy)]
pub struct PlannerDeps<'a> {
    /// Outline and repair proposals.
    pub proposer: &'a dyn ProposerBackend,
    /// Stepwise guidance for fills.
    pub guidance: Guidance<'a>,
    pub search: &'a SearchConfig,
    pub lexicon: Option<&'a HintLexicon>,
    pub observer: Option<&'a (dyn Fn(&PlanEvent<'_>) + Sync)>,
}

impl<'a> PlannerDeps<'a> {
    pub fn new(proposer: &'a dyn ProposerBackend, guidance: Guidance<'a>, search: &'a SearchConfig) -> Self {
        PlannerDeps { proposer, guidance, search, lexicon: None, observer: None }
    }
}

// ---------------------------------------------------------------------------
// Prompts

fn outline_prompt(goal: &str, hints: &HintSet) -> String {
    let mut out = String::new();
    section(&mut out, "GOAL:", goal);
    section(&mut out, "FACTS:", &hints.ids().join("\n"));
    if let Some(h) = crate::proposer::hints_line(&hints.ids()) {
        out.push_str(&h);
        out.push('\n');
    }
    out
}

struct RepairPrompt<'p> {
    goal: &'p str,
    errors: &'p [String],
    context: &'p str,
    block: &'p str,
    counterexamples: &'p [String],
    banned: &'p [String],
}

fn repair_prompt(p: &RepairPrompt<'_>) -> String {
    let mut out = String::new();
    section(&mut out, "GOAL:", p.goal);
    section(&mut out, "ERRORS:", &p.errors.join("\n"));
    section(&mut out, "CONTEXT:", p.context);
    section(&mut out, "BLOCK:", p.block);
    section(&mut out, "COUNTEREXAMPLES:", &p.counterexamples.join("\n"));
    section(&mut out, "BANNED:", &p.banned.join("\n"));
    out
}

/// Strip absolute paths and timestamps from a checker message.
pub fn normalize_error(message: &str) -> String {
    message
        .split_whitespace()
        .map(|tok| {
            let bare = tok.trim_matches(|c: char| matches!(c, '"' | '\'' | '(' | ')' | ',' | ';'));
            if bare.starts_with('/') && bare.len() > 1 {
                tok.replace(bare, "<path>")
            } else if bare.contains(':')
                && bare.chars().any(|c| c.is_ascii_digit())
                && bare.chars().all(|c| c.is_ascii_digit() || matches!(c, ':' | '.' | '-' | 'T' | 'Z'))
            {
                tok.replace(bare, "<time>")
            } else {
                tok.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

// ---------------------------------------------------------------------------
// Operations

/// Up to `|T|·k` proposer calls; normalized, unsalvageable samples dropped,
/// duplicates removed.
pub fn sample_outlines(goal: &str, hints: &HintSet, cfg: &PlannerConfig, proposer: &dyn ProposerBackend) -> Vec<ProofScript> {
    let system = system_prompt(ProposalMode::Outline);
    let user = outline_prompt(goal, hints);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for &t in &cfg.temperatures {
        for _ in 0..cfg.samples_per_temp {
            let raw = match proposer.complete(&system, &user, t, 1) {
                Ok(r) => r,
                Err(e) => {
                    log::warn!("outline sampling failed: {e}");
                    continue;
                }
            };
            if let Ok(s) = normalize_outline(&raw, goal, cfg.enforce_holes) {
                if seen.insert(script_digest(&s)) {
                    out.push(s);
                }
            }
        }
    }
    out
}

/// `α·clean − β·holes + γ·bonus`.
pub fn outline_score(clean: bool, holes: usize, bonus: usize, cfg: &PlannerConfig) -> f64 {
    cfg.alpha * if clean { 1.0 } else { 0.0 } - cfg.beta * holes as f64 + cfg.gamma * bonus as f64
}

pub fn score_outline(
    ctx: &RunContext<'_>,
    outline: &ProofScript,
    hints: &HintSet,
    cfg: &PlannerConfig,
    kind: AttemptType,
) -> f64 {
    let bonus = hint_bonus(outline, hints, cfg.k_hint);
    let mut rec = ctx.record(kind, outline.goal());
    rec.hints_used = hints.ids().into_iter().filter(|h| crate::tokenize::contains_word(&outline.render(), h)).collect();
    let r = ctx.gapped(outline, rec);
    outline_score(r.success, find_holes(outline).len(), bonus, cfg)
}

/// Outlines ranked best first; ties go to fewer lines.
fn rank_outlines(ctx: &RunContext<'_>, outlines: Vec<ProofScript>, hints: &HintSet, cfg: &PlannerConfig, kind: AttemptType) -> Vec<(f64, ProofScript)> {
    let mut scored: Vec<(f64, ProofScript)> =
        outlines.into_iter().map(|o| (score_outline(ctx, &o, hints, cfg, kind), o)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.command_len().cmp(&b.1.command_len())));
    scored
}

/// First subgoal of a printed state (` 1. <text>`).
pub fn first_subgoal(state: &str) -> Option<String> {
    state.lines().find_map(|l| {
        let t = l.trim_start();
        t.strip_prefix("1.").map(|rest| rest.trim().to_string()).filter(|s| !s.is_empty())
    })
}

/// The active subgoal at `hole`, or the original goal when no state can be
/// read.
pub fn effective_goal(ctx: &RunContext<'_>, script: &ProofScript, hole: &Hole, goal: &str) -> String {
    let probe = probe_at_hole(script, hole);
    let mut rec = ctx.record(AttemptType::Probe, goal);
    rec.hid = Some(hid(script, hole));
    rec.tag = Some("effective_goal".into());
    let r = ctx.gapped(&probe, rec);
    first_subgoal(&r.state_hint).unwrap_or_else(|| goal.to_string())
}

/// Smallest error line at or before the hole, clamped into the body.
pub fn earliest_failure_line(ctx: &RunContext<'_>, script: &ProofScript, hole: &Hole) -> usize {
    anchor_from(&gapped_probe(ctx, script, "anchor"), script, hole)
}

fn gapped_probe(ctx: &RunContext<'_>, script: &ProofScript, tag: &str) -> CheckResult {
    let mut rec = ctx.record(AttemptType::Probe, script.goal());
    rec.tag = Some(tag.to_string());
    ctx.gapped(script, rec)
}

fn anchor_from(r: &CheckResult, script: &ProofScript, hole: &Hole) -> usize {
    let lo = script.header_index() + 1;
    let hi = hole.start_line.max(lo);
    r.errors
        .iter()
        .map(|(l, _)| *l)
        .filter(|&l| l <= hole.start_line)
        .min()
        .map(|l| l.clamp(lo, hi))
        .unwrap_or(hole.start_line)
}

pub fn counterexample_hints(ctx: &RunContext<'_>, state: &str) -> Vec<String> {
    let target = first_subgoal(state).unwrap_or_else(|| state.trim().to_string());
    if target.is_empty() {
        return vec![];
    }
    ctx.refute(&target)
        .map(|r| r.bindings.iter().map(|(v, x)| format!("COUNTEREXAMPLE: {v} = {x}")).collect())
        .unwrap_or_default()
}

/// Nearest hole to `previous`, ties toward the earlier hole.
pub fn select_focus(script: &ProofScript, previous: usize) -> Option<String> {
    nearest(script, &find_holes(script), previous).map(|h| hid(script, &h))
}

fn nearest(_script: &ProofScript, holes: &[Hole], previous: usize) -> Option<Hole> {
    holes.iter().min_by_key(|h| (h.start_line.abs_diff(previous), h.start_line)).cloned()
}

/// Replace the `sorry` of `hole` by `block` lines. A hole sharing its line
/// with a statement moves onto its own lines under it.
pub fn splice_at_hole(script: &ProofScript, hole: &Hole, block: &[String]) -> ProofScript {
    let lines = script.lines();
    let line = &lines[hole.start_line];
    let chars: Vec<char> = script.render().chars().collect();
    let mut line_start = hole.char_span.0;
    while line_start > 0 && chars[line_start - 1] != '\n' {
        line_start -= 1;
    }
    let col = hole.char_span.0 - line_start;
    let line_chars: Vec<char> = line.chars().collect();
    let before: String = line_chars[..col.min(line_chars.len())].iter().collect();
    let after: String = line_chars[(col + 5).min(line_chars.len())..].iter().collect();
    let ind = " ".repeat(indent_of(line));
    let mut out: Vec<String> = lines[..hole.start_line].to_vec();
    let inner = if before.trim().is_empty() {
        ind
    } else {
        out.push(before.trim_end().to_string());
        format!("{ind}  ")
    };
    let base = block.iter().filter(|l| !l.trim().is_empty()).map(|l| indent_of(l)).min().unwrap_or(0);
    for l in block.iter().filter(|l| !l.trim().is_empty()) {
        out.push(format!("{inner}{}", &l[base.min(indent_of(l))..]));
    }
    if !after.trim().is_empty() {
        if let Some(last) = out.last_mut() {
            last.push_str(&after);
        }
    }
    out.extend_from_slice(&lines[hole.end_line..]);
    ProofScript::from_lines(out).expect("header is kept")
}

/// Replace failing lines by holes until the gapped check is clean; `None`
/// when it cannot be made clean.
fn normalize(ctx: &RunContext<'_>, script: &ProofScript, first: Option<CheckResult>) -> Option<(ProofScript, Vec<Hole>)> {
    let mut current = script.clone();
    let mut opened: Vec<usize> = Vec::new();
    let mut result = first;
    for _ in 0..4 {
        let r = match result.take() {
            Some(r) => r,
            None => gapped_probe(ctx, &current, "normalize"),
        };
        if r.success {
            let holes = find_holes(&current).into_iter().filter(|h| opened.contains(&h.start_line)).collect();
            return Some((current, holes));
        }
        let failing: Vec<usize> = r.errors.iter().map(|(l, _)| *l).collect();
        let (next, new_holes) = open_minimal_sorries(&current, &failing);
        if next == current {
            return None;
        }
        current = next;
        opened = new_holes.iter().map(|h| h.start_line).collect();
    }
    None
}

fn holes_added(before: &ProofScript, after: &ProofScript) -> Vec<Hole> {
    let old: HashSet<String> = find_holes(before).iter().map(|h| hid(before, h)).collect();
    find_holes(after).into_iter().filter(|h| !old.contains(&hid(after, h))).collect()
}

/// Shallow stepwise search on the hole's effective goal, spliced back in.
pub fn fill_hole(
    ctx: &RunContext<'_>,
    script: &ProofScript,
    hole: &Hole,
    effective: &str,
    deps: &PlannerDeps<'_>,
    cfg: &PlannerConfig,
    budget: Duration,
) -> FillOutcome {
    let h = hid(script, hole);
    let sub = SearchConfig {
        beam_width: cfg.fill_beam,
        max_depth: cfg.fill_depth,
        budget: budget.as_secs_f64().min(cfg.fill_budget).max(1e-3),
        ..deps.search.clone()
    };
    let tag = format!("fill:{h}");
    let Ok(found) = prove_tagged(effective, &sub, ctx, deps.guidance, Some(&tag)) else {
        return FillOutcome::NoChange;
    };
    let cmds: Vec<String> = found.script.commands().iter().map(|s| s.to_string()).collect();
    let mut rec = ctx.record(AttemptType::Fill, script.goal());
    rec.hid = Some(h);
    rec.effective_goal = Some(effective.to_string());
    if found.solved {
        let spliced = splice_at_hole(script, hole, &cmds);
        rec.tag = Some("finisher".into());
        let r = ctx.verify_full(&spliced, rec);
        if r.success {
            return FillOutcome::Verified(spliced);
        }
        if r.errors.is_empty() {
            return FillOutcome::Partial(spliced, vec![]);
        }
        return match normalize(ctx, &spliced, None) {
            Some((s, opened)) => FillOutcome::Partial(s, opened),
            None => FillOutcome::NoChange,
        };
    }
    let applies: Vec<String> = cmds.into_iter().filter(|c| c.starts_with("apply")).collect();
    if applies.is_empty() {
        return FillOutcome::NoChange;
    }
    let block: Vec<String> = if is_apply_legal(script, hole) {
        applies.into_iter().chain(std::iter::once("sorry".to_string())).collect()
    } else {
        let mut b = vec!["proof -".to_string(), "  show ?thesis".to_string()];
        b.extend(applies.iter().map(|a| format!("    {a}")));
        b.push("    sorry".to_string());
        b.push("qed".to_string());
        b
    };
    let spliced = splice_at_hole(script, hole, &block);
    rec.tag = Some("apply-only".into());
    let r = ctx.gapped(&spliced, rec);
    let normalized = if r.success { Some((spliced.clone(), vec![])) } else { normalize(ctx, &spliced, Some(r)) };
    match normalized {
        Some((s, _)) if s != *script => {
            let opened = holes_added(script, &s);
            FillOutcome::Partial(s, opened)
        }
        _ => FillOutcome::NoChange,
    }
}

/// The smallest block of `kind` holding both lines.
fn block_of(script: &ProofScript, kind: BlockKind, focus: usize, hole_line: usize) -> Option<BlockSpan> {
    block_spans(script, kind)
        .into_iter()
        .filter(|s| s.contains(focus) && s.contains(hole_line))
        .min_by_key(|s| s.end_line - s.start_line)
}

/// Block for a repair stage: have/show at stage 1, case or subproof at
/// stage 2, the whole body when nothing narrower encloses the hole.
pub fn repair_block(script: &ProofScript, stage: u8, focus: usize, hole_line: usize) -> Option<BlockSpan> {
    let order: &[BlockKind] = if stage <= 1 {
        &[BlockKind::HaveShow, BlockKind::Subproof, BlockKind::Whole]
    } else {
        &[BlockKind::CaseBlock, BlockKind::Subproof, BlockKind::Whole]
    };
    order.iter().find_map(|k| block_of(script, *k, focus, hole_line).or_else(|| block_of(script, *k, hole_line, hole_line)))
}

/// Counterexample-guided block repair for one hole at `stage`.
#[allow(clippy::too_many_arguments)]
pub fn cegis_repair(
    ctx: &RunContext<'_>,
    script: &ProofScript,
    hole: &Hole,
    stage: u8,
    state: &mut PlannerState,
    cfg: &PlannerConfig,
    proposer: &dyn ProposerBackend,
    budget: Duration,
    try_no: u32,
) -> RepairOutcome {
    let deadline = Instant::now() + budget.min(Duration::from_secs_f64(cfg.repair_budget));
    let h = hid(script, hole);
    let gapped = gapped_probe(ctx, script, "anchor");
    let anchor = anchor_from(&gapped, script, hole);
    let focus = anchor.max(hole.start_line.saturating_sub(cfg.anchor_window));
    let Some(span) = repair_block(script, stage, focus, hole.start_line) else {
        return RepairOutcome::NoChange;
    };
    let kind = span.kind;
    let lines = script.lines();
    let block_text = lines[span.range()].join("\n");
    let effective = effective_goal(ctx, script, hole, script.goal());
    let ce = counterexample_hints(ctx, &effective);
    let errors: Vec<String> = gapped.errors.iter().map(|(l, m)| format!("line {l}: {}", normalize_error(m))).collect();
    let lo = span.start_line.saturating_sub(3);
    let hi = (span.end_line + 3).min(lines.len());
    let context = lines[lo..hi].join("\n");
    let system = system_prompt(ProposalMode::Repair);
    let mut banned_texts: Vec<String> = Vec::new();
    let mut partial: Option<ProofScript> = None;
    for round in 0..cfg.repair_rounds {
        if Instant::now() >= deadline {
            break;
        }
        let user = repair_prompt(&RepairPrompt {
            goal: &effective,
            errors: &errors,
            context: &context,
            block: &block_text,
            counterexamples: &ce,
            banned: &banned_texts,
        });
        let raw = match proposer.complete(&system, &user, temperature(ProposalMode::Repair, round as u32), 1) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("repair proposal failed: {e}");
                break;
            }
        };
        let Ok(candidate) = strip_to_type(&raw, kind) else { continue };
        let fp = block_fingerprint(&candidate);
        if state.is_banned(&h, kind, &fp) {
            continue;
        }
        let Ok(next) = replace_span(script, span.range(), &candidate) else { continue };
        let mut rec = ctx.record(AttemptType::Repair, script.goal());
        rec.action = candidate.clone();
        rec.stage = Some(stage);
        rec.block_kind = Some(kind);
        rec.hid = Some(h.clone());
        rec.effective_goal = Some(effective.clone());
        rec.counterexamples = ce.clone();
        rec.candidate_fp = Some(fp.clone());
        rec.ban_size = Some(state.ban_len(&h, kind));
        rec.tag = Some(format!("stage={stage} try={try_no}"));
        let r = ctx.verify_full(&next, rec);
        if r.success {
            return RepairOutcome::Verified(next);
        }
        state.ban(&h, kind, &fp, cfg.ban_max);
        banned_texts.push(candidate);
        if r.errors.is_empty() && next != *script {
            partial = Some(next);
        }
    }
    match partial {
        Some(p) => RepairOutcome::Partial(p, format!("stage={stage} partial-progress")),
        None => RepairOutcome::NoChange,
    }
}

fn gather_hints(ctx: &RunContext<'_>, goal: &str, cfg: &PlannerConfig, lexicon: Option<&HintLexicon>) -> HintSet {
    let ctx_hints = if cfg.k_ctx == 0 {
        vec![]
    } else {
        let mut rec = ctx.record(AttemptType::Probe, goal);
        rec.tag = Some("hints".into());
        let r = ctx.check(&[lemma_line(goal)], "", CheckMode::Step, rec);
        context_hints_from_state(&r.state_hint, cfg.k_ctx)
    };
    let lex = lexicon.map(|l| lexicon_hints(l, goal, cfg.k_lex)).unwrap_or_default();
    combine_hints(&ctx_hints, &lex, cfg.k_hint)
}

fn fallback_outline(goal: &str) -> ProofScript {
    ProofScript::parse(&format!("{}\n  sorry", lemma_line(goal))).expect("fallback parses")
}

/// Best normalized outline; `None` when nothing salvageable was sampled.
pub fn plan_outline(
    goal: &str,
    cfg: &PlannerConfig,
    ctx: &RunContext<'_>,
    deps: &PlannerDeps<'_>,
) -> Result<Option<ProofScript>, PlanError> {
    if goal.trim().is_empty() {
        return Err(PlanError::EmptyGoal);
    }
    cfg.validate()?;
    let hints = gather_hints(ctx, goal, cfg, deps.lexicon);
    let outlines = sample_outlines(goal, &hints, cfg, deps.proposer);
    Ok(rank_outlines(ctx, outlines, &hints, cfg, AttemptType::Outline).into_iter().next().map(|(_, s)| s))
}

struct Driver<'d, 'a> {
    goal: String,
    cfg: &'d PlannerConfig,
    ctx: &'d RunContext<'a>,
    deps: &'d PlannerDeps<'d>,
    hints: HintSet,
    deadline: Instant,
    start: Instant,
    iteration: u64,
    outlines_sampled: u64,
    fills: u64,
    repairs: u64,
    regenerations: u64,
}

impl Driver<'_, '_> {
    fn remaining(&self) -> Duration {
        self.deadline.saturating_duration_since(Instant::now())
    }

    fn emit(&mut self, step: PlanStep, script: &ProofScript, hid: Option<&str>) {
        self.iteration += 1;
        if let Some(obs) = self.deps.observer {
            obs(&PlanEvent { iteration: self.iteration, step, script, hid });
        }
    }

    /// Sample, rank and normalize; the first outline that can be made clean
    /// wins, else the bare `sorry` proof.
    fn best_outline(&mut self, kind: AttemptType) -> ProofScript {
        let outlines = sample_outlines(&self.goal, &self.hints, self.cfg, self.deps.proposer);
        self.outlines_sampled += outlines.len() as u64;
        let ranked = rank_outlines(self.ctx, outlines, &self.hints, self.cfg, kind);
        for (_, o) in ranked {
            if let Some((s, _)) = normalize(self.ctx, &o, None) {
                return s;
            }
        }
        fallback_outline(&self.goal)
    }

    fn score(&self, s: &ProofScript) -> f64 {
        outline_score(true, find_holes(s).len(), hint_bonus(s, &self.hints, self.cfg.k_hint), self.cfg)
    }

    fn run(&mut self) -> PlanResult {
        let mut working = self.best_outline(AttemptType::Outline);
        let mut best = working.clone();
        let mut state = PlannerState::default();
        let mut exhausted: HashSet<String> = HashSet::new();
        let mut previous = find_holes(&working).first().map_or(0, |h| h.start_line);
        let mut tries_this_hole: HashMap<(String, u8), u32> = HashMap::new();
        self.emit(PlanStep::Initial, &working.clone(), None);

        let solved = loop {
            if Instant::now() >= self.deadline {
                break false;
            }
            let holes = find_holes(&working);
            if holes.is_empty() {
                let mut rec = self.ctx.record(AttemptType::Probe, &self.goal);
                rec.tag = Some("final".into());
                if self.ctx.verify_full(&working, rec).success {
                    break true;
                }
                break false;
            }
            let live: Vec<Hole> = holes.iter().filter(|h| !exhausted.contains(&hid(&working, h))).cloned().collect();
            let hole = state
                .focus
                .as_ref()
                .and_then(|f| live.iter().find(|h| hid(&working, h) == *f).cloned())
                .or_else(|| nearest(&working, &live, previous));
            let Some(hole) = hole else { break false };
            let h = hid(&working, &hole);
            state.focus = Some(h.clone());
            previous = hole.start_line;
            let stage = state.stage_of(&h);
            let eff_stage = stage.max(1);
            let try_no = {
                let t = tries_this_hole.entry((h.clone(), eff_stage)).or_insert(0);
                *t += 1;
                *t
            };

            let mut outcome: Option<(PlanStep, ProofScript, Vec<Hole>)> = None;
            if stage <= 1 {
                self.fills += 1;
                let eff = effective_goal(self.ctx, &working, &hole, &self.goal);
                match fill_hole(self.ctx, &working, &hole, &eff, self.deps, self.cfg, self.remaining()) {
                    FillOutcome::Verified(s) => outcome = Some((PlanStep::Verified, s, vec![])),
                    FillOutcome::Partial(s, opened) => outcome = Some((PlanStep::Partial, s, opened)),
                    FillOutcome::NoChange => {}
                }
            }
            if outcome.is_none() && Instant::now() < self.deadline {
                self.repairs += 1;
                let r = cegis_repair(
                    self.ctx,
                    &working,
                    &hole,
                    eff_stage,
                    &mut state,
                    self.cfg,
                    self.deps.proposer,
                    self.remaining(),
                    try_no,
                );
                match r {
                    RepairOutcome::Verified(s) => outcome = Some((PlanStep::Verified, s, vec![])),
                    RepairOutcome::Partial(s, tag) => {
                        log::debug!("{tag}");
                        let opened = holes_added(&working, &s);
                        outcome = Some((PlanStep::Partial, s, opened));
                    }
                    RepairOutcome::NoChange => {}
                }
            }

            match outcome {
                Some((PlanStep::Verified, s, _)) => {
                    working = s;
                    self.emit(PlanStep::Verified, &working.clone(), Some(&h));
                    break true;
                }
                Some((_, s, opened)) => {
                    state.record_failure(&h);
                    escalate(&mut state, &h, self.cfg.c1, self.cfg.c2);
                    working = s;
                    state.focus = nearest(&working, &opened, previous)
                        .or_else(|| nearest(&working, &find_holes(&working), previous))
                        .map(|x| hid(&working, &x));
                    if self.score(&working) >= self.score(&best) {
                        best = working.clone();
                    }
                    self.emit(PlanStep::Partial, &working.clone(), Some(&h));
                }
                None => {
                    state.record_failure(&h);
                    escalate(&mut state, &h, self.cfg.c1, self.cfg.c2);
                    self.emit(PlanStep::NoChange, &working.clone(), Some(&h));
                    if state.regenerate {
                        state.regenerate = false;
                        state.focus = None;
                        if self.regenerations < self.cfg.regeneration_cap as u64 && Instant::now() < self.deadline {
                            self.regenerations += 1;
                            exhausted.insert(h.clone());
                            working = self.best_outline(AttemptType::Regeneration);
                            previous = find_holes(&working).first().map_or(0, |x| x.start_line);
                            if self.score(&working) > self.score(&best) {
                                best = working.clone();
                            }
                            self.emit(PlanStep::Regenerated, &working.clone(), None);
                        } else {
                            exhausted.insert(h.clone());
                        }
                    }
                }
            }
        };
        let script = if solved || self.score(&working) >= self.score(&best) { working } else { best };
        PlanResult {
            solved,
            script,
            outlines_sampled: self.outlines_sampled,
            fills_attempted: self.fills,
            repairs_attempted: self.repairs,
            regenerations: self.regenerations,
            elapsed: self.start.elapsed(),
            timed_out: !solved && Instant::now() >= self.deadline,
        }
    }
}

/// The auto-mode driver inside an existing run.
pub fn plan_auto(goal: &str, cfg: &PlannerConfig, ctx: &RunContext<'_>, deps: &PlannerDeps<'_>) -> Result<PlanResult, PlanError> {
    if goal.trim().is_empty() {
        return Err(PlanError::EmptyGoal);
    }
    cfg.validate()?;
    let start = Instant::now();
    let hints = gather_hints(ctx, goal, cfg, deps.lexicon);
    let mut driver = Driver {
        goal: goal.to_string(),
        cfg,
        ctx,
        deps,
        hints,
        deadline: start + Duration::from_secs_f64(cfg.budget.min(1e9)),
        start,
        iteration: 0,
        outlines_sampled: 0,
        fills: 0,
        repairs: 0,
        regenerations: 0,
    };
    Ok(driver.run())
}

/// Run [`plan_auto`] with a fresh run context and log the run record.
pub fn plan_goal(
    goal: &str,
    cfg: &PlannerConfig,
    backend: &dyn VerifierBackend,
    deps: &PlannerDeps<'_>,
    sink: &dyn LogSink,
    cache: StepCache,
) -> Result<PlanResult, PlanError> {
    cfg.validate()?;
    let run_id = crate::datalog::new_run_id();
    let ctx = RunContext::new(&run_id, backend, sink, cache).with_timeout(Duration::from_secs_f64(cfg.check_timeout));
    let result = plan_auto(goal, cfg, &ctx, deps)?;
    let mut run = RunRecord::new(&run_id, goal, "plan");
    run.config = serde_json::json!({ "planner": cfg, "search": deps.search });
    run.models.insert("proposer".into(), deps.proposer.name().to_string());
    run.runtime_ms = result.elapsed.as_millis() as u64;
    run.timeout = result.timed_out;
    run.success = result.solved;
    run.final_proof = result.solved.then(|| result.script.render());
    run.stats.fills = result.fills_attempted;
    run.stats.repairs = result.repairs_attempted;
    run.stats.regenerations = result.regenerations;
    run.stats.outlines = result.outlines_sampled;
    run.stats.verifier_calls = ctx.evaluations();
    if let Err(e) = sink.log_run(&run) {
        log::warn!("dropping run record: {e}");
    }
    let _ = sink.flush();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datalog::MemorySink;
    use crate::proposer::mock::{OracleProposer, ScriptedProposer};
    use crate::verifier::{generate_space, MockBackend, SyntheticSpace};

    fn fixture() -> SyntheticSpace {
        SyntheticSpace::from_json(
            r#"{
              "root": "r",
              "nodes": {
                "r": {"subgoals": 2, "goal": "A ∧ B"},
                "a": {"subgoals": 1, "goal": "A"},
                "a1": {"subgoals": 1, "goal": "A'"},
                "b": {"subgoals": 1, "goal": "B"},
                "t": {"subgoals": 0}
              },
              "edges": [
                {"from": "a", "cmd": "apply simp", "to": "a1"},
                {"from": "a1", "cmd": "by auto", "to": "t"},
                {"from": "b", "cmd": "by blast", "to": "t"},
                {"from": "r", "cmd": "by (intro conjI)", "to": "t"}
              ],
              "refutable": {"B": [["x", "0"]]}
            }"#,
        )
        .unwrap()
    }

    fn ctx_for<'a>(b: &'a MockBackend, s: &'a MemorySink) -> RunContext<'a> {
        RunContext::new("run", b, s, StepCache::isolated())
    }

    fn script(text: &str) -> ProofScript {
        ProofScript::parse(text).unwrap()
    }

    #[test]
    fn scoring_formula() {
        let cfg = PlannerConfig::default();
        assert_eq!(outline_score(true, 2, 1, &cfg), 9.0);
        assert_eq!(outline_score(false, 3, 0, &cfg), -3.0);
        let g0 = PlannerConfig { gamma: 0.0, ..Default::default() };
        assert_eq!(outline_score(true, 1, 0, &g0), outline_score(true, 1, 5, &g0));
    }

    #[test]
    fn outline_sampling() {
        let cfg = PlannerConfig { temperatures: vec![0.3, 0.7], samples_per_temp: 2, ..Default::default() };
        let same = ScriptedProposer::new().with_lines("mode:outline", &["proof -", "  show ?thesis sorry", "qed"]);
        let hints = HintSet::default();
        let out = sample_outlines("G", &hints, &cfg, &same);
        assert_eq!(out.len(), 1);
        assert_eq!(same.calls(), 4);
        let junk = ScriptedProposer::new().with_lines("mode:outline", &[""]);
        assert!(sample_outlines("G", &hints, &cfg, &junk).is_empty());
        let varied = ScriptedProposer::new().with_responses(
            "mode:outline",
            &["proof -\n  have \"A\" sorry\n  show ?thesis sorry\nqed", "proof -\n  show ?thesis sorry\nqed", "by simp", "by auto"],
        );
        assert!(sample_outlines("G", &hints, &cfg, &varied).len() <= 4);
    }

    #[test]
    fn effective_goal_and_fallback() {
        let b = MockBackend::new(fixture()).unwrap();
        let sink = MemorySink::new();
        let ctx = ctx_for(&b, &sink);
        let s = script("lemma \"A ∧ B\"\nproof -\n  have \"A\"\n    sorry\n  show ?thesis\n    sorry\nqed");
        let holes = find_holes(&s);
        assert_eq!(effective_goal(&ctx, &s, &holes[0], "A ∧ B"), "A");
        let unknown = script("lemma \"A ∧ B\"\nproof -\n  have \"zzz\"\n    sorry\n  show ?thesis\n    sorry\nqed");
        let h = find_holes(&unknown);
        assert_eq!(effective_goal(&ctx, &unknown, &h[0], "A ∧ B"), "zzz");
        assert_eq!(first_subgoal("garbage"), None);
        assert_eq!(first_subgoal("goal (1 subgoal):\n 1. Q y"), Some("Q y".into()));
    }

    #[test]
    fn anchors_and_focus() {
        let b = MockBackend::new(fixture()).unwrap();
        let sink = MemorySink::new();
        let ctx = ctx_for(&b, &sink);
        let s = script("lemma \"A ∧ B\"\nproof -\n  have \"A\"\n    apply nonsense\n    sorry\n  show ?thesis\n    sorry\nqed");
        let holes = find_holes(&s);
        assert_eq!(earliest_failure_line(&ctx, &s, &holes[1]), 3);
        let clean = script("lemma \"A ∧ B\"\nproof -\n  have \"A\"\n    sorry\n  show ?thesis\n    sorry\nqed");
        let h = find_holes(&clean);
        assert_eq!(earliest_failure_line(&ctx, &clean, &h[1]), h[1].start_line);
        let r = CheckResult::failure(0, "bad header");
        assert_eq!(anchor_from(&r, &clean, &h[1]), 1);

        let many = script("lemma \"G\"\n  a\n  sorry\n  b\n  c\n  d\n  sorry\n  e\n  f\n  sorry");
        let hs = find_holes(&many);
        assert_eq!(select_focus(&many, 4), Some(hid(&many, &hs[0])));
        let eq = script("lemma \"G\"\n  sorry\n  x\n  y\n  z\n  sorry");
        let hs = find_holes(&eq);
        assert_eq!(select_focus(&eq, 3), Some(hid(&eq, &hs[0])));
        assert_eq!(select_focus(&script("lemma \"G\"\n  by simp"), 3), None);
    }

    #[test]
    fn counterexample_lines() {
        let b = MockBackend::new(fixture()).unwrap();
        let sink = MemorySink::new();
        let ctx = ctx_for(&b, &sink);
        assert_eq!(counterexample_hints(&ctx, "goal (1 subgoal):\n 1. B"), vec!["COUNTEREXAMPLE: x = 0"]);
        assert!(counterexample_hints(&ctx, "goal (1 subgoal):\n 1. A").is_empty());
        assert!(sink.attempts().is_empty());
    }

    #[test]
    fn escalation_caps() {
        let mut st = PlannerState::default();
        st.record_failure("h");
        escalate(&mut st, "h", 2, 3);
        assert_eq!(st.stage_of("h"), 0);
        st.record_failure("h");
        escalate(&mut st, "h", 2, 3);
        assert_eq!(st.stage_of("h"), 2);
        for _ in 0..2 {
            st.record_failure("h");
            escalate(&mut st, "h", 2, 3);
            assert!(!st.regenerate);
        }
        st.record_failure("h");
        escalate(&mut st, "h", 2, 3);
        assert!(st.regenerate);
        assert_eq!(st.stage_of("h"), 2);
    }

    #[test]
    fn ban_list_bounded() {
        let mut st = PlannerState::default();
        for i in 0..12 {
            st.ban("h", BlockKind::HaveShow, &format!("f{i}"), 8);
        }
        assert_eq!(st.ban_len("h", BlockKind::HaveShow), 8);
        assert!(!st.is_banned("h", BlockKind::HaveShow, "f0"));
        assert!(st.is_banned("h", BlockKind::HaveShow, "f11"));
        assert!(!st.is_banned("h", BlockKind::Subproof, "f11"));
    }

    fn deps_with<'a>(p: &'a dyn ProposerBackend, g: &'a dyn ProposerBackend, search: &'a SearchConfig) -> PlannerDeps<'a> {
        PlannerDeps::new(p, Guidance::new(g), search)
    }

    #[test]
    fn fill_verified_and_partial() {
        let space = fixture();
        let b = MockBackend::new(space.clone()).unwrap();
        let sink = MemorySink::new();
        let ctx = ctx_for(&b, &sink);
        let oracle = OracleProposer::new(space, 0, 1);
        let search = SearchConfig::default();
        let deps = deps_with(&oracle, &oracle, &search);
        let cfg = PlannerConfig::default();
        let s = script("lemma \"A ∧ B\"\nproof -\n  have \"A\"\n    sorry\n  show ?thesis\n    by (intro conjI)\nqed");
        let hole = &find_holes(&s)[0];
        match fill_hole(&ctx, &s, hole, "A", &deps, &cfg, Duration::from_secs(5)) {
            FillOutcome::Verified(v) => {
                assert!(!v.has_holes());
                assert!(v.render().contains("    apply simp\n    by auto"));
            }
            other => panic!("{other:?}"),
        }
        // apply-only progress under `have`: wrapped subproof with a new hole
        let mut cut = fixture();
        cut.edges.retain(|e| e.cmd != "by auto");
        let b2 = MockBackend::new(cut.clone()).unwrap();
        let ctx2 = ctx_for(&b2, &sink);
        let oracle2 = OracleProposer::new(cut, 0, 1);
        let deps2 = deps_with(&oracle2, &oracle2, &search);
        match fill_hole(&ctx2, &s, hole, "A", &deps2, &cfg, Duration::from_secs(5)) {
            FillOutcome::Partial(p, opened) => {
                assert!(p.render().contains("proof -\n      show ?thesis\n        apply simp\n        sorry"), "{}", p.render());
                assert!(!opened.is_empty());
            }
            other => panic!("{other:?}"),
        }
        let nothing = ScriptedProposer::new();
        let deps3 = deps_with(&nothing, &nothing, &search);
        assert_eq!(fill_hole(&ctx, &s, hole, "A", &deps3, &cfg, Duration::from_secs(1)), FillOutcome::NoChange);
    }

    #[test]
    fn repair_second_candidate_verifies() {
        let b = MockBackend::new(fixture()).unwrap();
        let sink = MemorySink::new();
        let ctx = ctx_for(&b, &sink);
        let s = script("lemma \"A ∧ B\"\nproof -\n  have \"A\"\n    sorry\n  show ?thesis\n    by (intro conjI)\nqed");
        let hole = find_holes(&s)[0].clone();
        let p = ScriptedProposer::new().with_responses(
            "mode:repair",
            &["have \"A\"\n  by nonsense", "have \"A\"\n  by nonsense", "have \"A\"\n  apply simp\n  by auto"],
        );
        let mut st = PlannerState::default();
        let cfg = PlannerConfig::default();
        let r = cegis_repair(&ctx, &s, &hole, 1, &mut st, &cfg, &p, Duration::from_secs(5), 1);
        assert!(matches!(r, RepairOutcome::Verified(_)), "{r:?}");
        let repairs: Vec<_> = sink.attempts().into_iter().filter(|a| a.attempt_type == AttemptType::Repair).collect();
        assert_eq!(repairs.len(), 2);
        assert_eq!(repairs[1].ban_size, Some(1));
    }

    #[test]
    fn repair_partial_progress_tag() {
        let b = MockBackend::new(fixture()).unwrap();
        let sink = MemorySink::new();
        let ctx = ctx_for(&b, &sink);
        let s = script("lemma \"A ∧ B\"\nproof -\n  have \"A\"\n    sorry\n  show ?thesis\n    by (intro conjI)\nqed");
        let hole = find_holes(&s)[0].clone();
        let p = ScriptedProposer::new().with_lines("mode:repair", &["have \"A\"", "  apply simp", "  sorry"]);
        let mut st = PlannerState::default();
        let cfg = PlannerConfig { repair_rounds: 1, ..Default::default() };
        match cegis_repair(&ctx, &s, &hole, 1, &mut st, &cfg, &p, Duration::from_secs(5), 1) {
            RepairOutcome::Partial(_, tag) => assert_eq!(tag, "stage=1 partial-progress"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn auto_mode_end_to_end() {
        let space = generate_space(3, 2, 1, 7);
        let goal = space.root_goal();
        let b = MockBackend::new(space.clone()).unwrap();
        let oracle = OracleProposer::new(space, 1, 3);
        let search = SearchConfig::default();
        let deps = deps_with(&oracle, &oracle, &search);
        let sink = MemorySink::new();
        let cfg = PlannerConfig { budget: 30.0, ..Default::default() };
        let r = plan_goal(&goal, &cfg, &b, &deps, &sink, StepCache::isolated()).unwrap();
        assert!(r.solved, "{}", r.script.render());
        assert_eq!(r.holes_remaining(), 0);
        assert_eq!(r.repairs_attempted, 0);
        assert!(crate::verifier::verify_full(&b, &r.script, Duration::from_secs(1)).unwrap().success);
        let runs = sink.runs();
        assert_eq!(runs[0].stats.verifier_calls as usize, sink.attempts().len());
    }

    #[test]
    fn zero_budget_returns_outline() {
        let space = generate_space(3, 2, 1, 7);
        let goal = space.root_goal();
        let b = MockBackend::new(space.clone()).unwrap();
        let oracle = OracleProposer::new(space, 1, 3);
        let search = SearchConfig::default();
        let deps = deps_with(&oracle, &oracle, &search);
        let sink = MemorySink::new();
        let cfg = PlannerConfig { budget: 0.0, ..Default::default() };
        let r = plan_goal(&goal, &cfg, &b, &deps, &sink, StepCache::isolated()).unwrap();
        assert!(!r.solved);
        assert_eq!(r.holes_remaining(), 1);
    }

    #[test]
    fn error_normalization() {
        assert_eq!(normalize_error("at /home/u/x.thy 12:03:55 bad"), "at <path> <time> bad");
        assert_eq!(normalize_error("Failed to apply"), "Failed to apply");
    }
}
