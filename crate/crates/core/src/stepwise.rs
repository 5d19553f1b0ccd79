//! Bounded beam search over proof scripts, one verified command at a time,
//! plus post-hoc minimisation and Isar conversion of found proofs.

use crate::datalog::{AttemptRecord, AttemptType, LogSink, RunRecord};
use crate::premises::{premise_stats, rerank, retrieval_query, PairScorer, PremiseIndex, RetrievalResult, SelectBackend};
use crate::proposer::{propose, ProposalContext, ProposalMode, ProposerBackend};
use crate::rerank::features::goal_flags;
use crate::rerank::{featurize, FeatureContext, RerankModel};
use crate::script_model::{first_word, is_declaration, ProofScript};
use crate::session::RunContext;
use crate::verifier::{CheckMode, CheckResult, StepCache, VerifierBackend};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::time::{Duration, Instant};
use thiserror::Error;

/// Subgoal count used when the state does not report one.
pub const SENTINEL: u32 = 1_000_000;
const ONE_LINERS: [&str; 3] = ["by simp", "by auto", "by blast"];

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("goal is empty")]
    EmptyGoal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub beam_width: usize,
    pub max_depth: u32,
    /// Wall-clock budget in seconds.
    pub budget: f64,
    pub candidates_per_call: usize,
    pub reranker_weight: f64,
    pub refute_interval: u32,
    pub finish_trigger: u32,
    /// Per-check verifier timeout in seconds.
    pub check_timeout: f64,
    pub k_select: usize,
    pub k_rerank: usize,
    /// Check a beam entry's step candidates concurrently.
    pub parallel: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            beam_width: 4,
            max_depth: 8,
            budget: 120.0,
            candidates_per_call: 6,
            reranker_weight: 2.0,
            refute_interval: 3,
            finish_trigger: 2,
            check_timeout: 10.0,
            k_select: 32,
            k_rerank: 8,
            parallel: true,
        }
    }
}

impl SearchConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN too
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::InvalidConfig(m.to_string()));
        if self.beam_width < 1 {
            return bad("beam width must be at least 1");
        }
        if self.max_depth < 1 {
            return bad("depth must be at least 1");
        }
        if !(self.budget > 0.0) || !self.budget.is_finite() {
            return bad("budget must be positive");
        }
        if !(self.reranker_weight >= 0.0) {
            return bad("reranker weight must be non-negative");
        }
        if self.refute_interval < 1 {
            return bad("refute interval must be at least 1");
        }
        if self.candidates_per_call < 1 {
            return bad("candidates per call must be at least 1");
        }
        if !(self.check_timeout > 0.0) {
            return bad("check timeout must be positive");
        }
        Ok(())
    }

    pub fn budget_duration(&self) -> Duration {
        Duration::from_secs_f64(self.budget.min(1e9))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamEntry {
    pub script: ProofScript,
    /// Ordering key of the command that produced this entry.
    pub score: f64,
    pub state_hint: String,
    pub subgoals: u32,
}

impl BeamEntry {
    pub fn root(goal: &str) -> Self {
        BeamEntry { script: ProofScript::lemma(goal), score: 0.0, state_hint: String::new(), subgoals: SENTINEL }
    }

    pub fn known_subgoals(&self) -> Option<u32> {
        (self.subgoals != SENTINEL).then_some(self.subgoals)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProofResult {
    pub solved: bool,
    pub script: ProofScript,
    pub depth_reached: u32,
    pub expansions: u64,
    pub elapsed: Duration,
    pub timed_out: bool,
    pub refuted: u64,
}

/// Learned and retrieved guidance for the search; everything but the
/// proposer is optional.
#[derive(Clone, Copy)]
pub struct Guidance<'a> {
    pub proposer: &'a dyn ProposerBackend,
    pub reranker: Option<&'a RerankModel>,
    pub premises: Option<&'a PremiseIndex>,
    pub premise_backend: SelectBackend,
    pub premise_scorer: Option<&'a (dyn PairScorer + Sync)>,
}

impl<'a> Guidance<'a> {
    pub fn new(proposer: &'a dyn ProposerBackend) -> Self {
        Guidance { proposer, reranker: None, premises: None, premise_backend: SelectBackend::Tfidf, premise_scorer: None }
    }
}

/// Stable sort by `(subgoals, script length)`, one entry per state
/// fingerprint, at most `width` entries.
pub fn expand_beam(mut successes: Vec<BeamEntry>, width: usize) -> Vec<BeamEntry> {
    successes.sort_by_key(|e| (e.subgoals, e.script.command_len()));
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for e in successes {
        let fp = if e.state_hint.trim().is_empty() {
            e.script.fingerprint()
        } else {
            crate::fingerprint::state_fingerprint(&e.state_hint)
        };
        if seen.insert(fp) {
            out.push(e);
            if out.len() == width {
                break;
            }
        }
    }
    out
}

/// A candidate with its position, reranker score and final key.
#[derive(Debug, Clone, PartialEq)]
pub struct Ordered {
    pub command: String,
    pub index: usize,
    pub rerank_score: Option<f64>,
    pub key: f64,
    pub features: Vec<f64>,
}

/// Key = proposer index − λ·f(x); ascending, stable.
pub fn order_candidates(
    candidates: &[String],
    features: &[Vec<f64>],
    reranker: Option<&RerankModel>,
    lambda: f64,
) -> Vec<Ordered> {
    let mut out: Vec<Ordered> = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let x = features.get(i).cloned().unwrap_or_default();
            let f = reranker.and_then(|m| m.predict(&x).ok());
            Ordered { command: c.clone(), index: i, rerank_score: f, key: i as f64 - lambda * f.unwrap_or(0.0), features: x }
        })
        .collect();
    out.sort_by(|a, b| a.key.total_cmp(&b.key));
    out
}

/// Refute on every `interval`-th round when the goal or state has
/// quantifier or connective structure.
pub fn should_refute(goal: &str, state_hint: &str, round: u32, interval: u32) -> bool {
    if interval == 0 || !round.is_multiple_of(interval) {
        return false;
    }
    let text = format!("{goal}\n{state_hint}");
    let flags = goal_flags(&text);
    flags[3] == 1.0 || flags[4] == 1.0
}

/// Search with a fresh run context; the run record goes to `sink`.
pub fn prove_goal(
    goal: &str,
    cfg: &SearchConfig,
    backend: &dyn VerifierBackend,
    guidance: Guidance<'_>,
    sink: &dyn LogSink,
    cache: StepCache,
) -> Result<ProofResult, SearchError> {
    cfg.validate()?;
    let run_id = crate::datalog::new_run_id();
    let ctx = RunContext::new(&run_id, backend, sink, cache).with_timeout(Duration::from_secs_f64(cfg.check_timeout));
    let result = prove(goal, cfg, &ctx, guidance)?;
    let mut run = RunRecord::new(&run_id, goal, "prove");
    run.config = serde_json::to_value(cfg).unwrap_or_default();
    run.models.insert("proposer".into(), guidance.proposer.name().to_string());
    if let Some(m) = guidance.reranker {
        run.models.insert("reranker".into(), m.kind.as_str().to_string());
    }
    if guidance.premises.is_some() {
        run.models.insert("premises".into(), format!("{:?}", guidance.premise_backend).to_lowercase());
    }
    run.runtime_ms = result.elapsed.as_millis() as u64;
    run.timeout = result.timed_out;
    run.success = result.solved;
    run.final_proof = result.solved.then(|| result.script.render());
    run.stats.depth_reached = result.depth_reached;
    run.stats.expansions = result.expansions;
    run.stats.verifier_calls = ctx.evaluations();
    if let Err(e) = sink.log_run(&run) {
        log::warn!("dropping run record: {e}");
    }
    let _ = sink.flush();
    Ok(result)
}

struct Search<'c, 'a> {
    goal: String,
    cfg: &'c SearchConfig,
    ctx: &'c RunContext<'a>,
    guidance: Guidance<'c>,
    start: Instant,
    deadline: Instant,
    tag: Option<String>,
}

impl Search<'_, '_> {
    fn expired(&self) -> bool {
        Instant::now() >= self.deadline
    }

    fn retrieve(&self, state_hint: &str) -> Option<RetrievalResult> {
        let index = self.guidance.premises?;
        let query = retrieval_query(&self.goal, state_hint);
        match index.select(&query, self.cfg.k_select, self.guidance.premise_backend) {
            Ok(pool) => Some(rerank(
                &query,
                &pool,
                self.cfg.k_rerank,
                self.guidance.premise_scorer.map(|s| s as &dyn PairScorer),
            )),
            Err(e) => {
                log::warn!("premise retrieval failed: {e}");
                None
            }
        }
    }

    fn candidates(&self, pctx: &ProposalContext, mode: ProposalMode) -> Vec<String> {
        match propose(self.guidance.proposer, pctx, mode, self.cfg.candidates_per_call) {
            Ok(c) => c,
            Err(e) => {
                log::warn!("proposer failed: {e}");
                vec![]
            }
        }
    }

    fn ordered(
        &self,
        entry: &BeamEntry,
        cands: &[String],
        mode: CheckMode,
        depth: u32,
        retrieved: Option<&RetrievalResult>,
    ) -> Vec<Ordered> {
        let prefix = entry.script.lines();
        let elapsed_s = self.start.elapsed().as_secs_f64();
        let goal_text = format!("{}\n{}", self.goal, entry.state_hint);
        let feats: Vec<Vec<f64>> = cands
            .iter()
            .map(|c| {
                let fctx = FeatureContext {
                    depth,
                    subgoals: entry.known_subgoals(),
                    elapsed_s,
                    cache_hit: self.ctx.is_cached(prefix, c, mode),
                    goal_text: goal_text.clone(),
                };
                let stats = retrieved.map(|r| premise_stats(r, c)).unwrap_or([0.0; 4]);
                featurize(&fctx, c, stats).to_vec()
            })
            .collect();
        order_candidates(cands, &feats, self.guidance.reranker, self.cfg.reranker_weight)
    }

    fn template(&self, kind: AttemptType, entry: &BeamEntry, depth: u32, o: &Ordered, pool: &[String]) -> AttemptRecord {
        let mut rec = self.ctx.record(kind, &self.goal);
        rec.action = o.command.clone();
        rec.depth = Some(depth);
        rec.subgoals_before = entry.known_subgoals();
        rec.features = o.features.clone();
        rec.rerank_score = o.rerank_score;
        rec.order_key = Some(o.key);
        rec.retrieval_pool = pool.to_vec();
        rec.tag = self.tag.clone();
        rec
    }

    fn run(&self) -> ProofResult {
        let mut beam = vec![BeamEntry::root(&self.goal)];
        let mut best = SENTINEL;
        let mut stagnation = 0u32;
        let mut expansions = 0u64;
        let mut depth_reached = 0u32;
        let mut refuted = 0u64;
        let finish = |solved: bool, script: ProofScript, depth: u32, exp: u64, refuted: u64| ProofResult {
            solved,
            script,
            depth_reached: depth,
            expansions: exp,
            elapsed: self.start.elapsed(),
            timed_out: !solved && self.expired(),
            refuted,
        };

        for round in 1..=self.cfg.max_depth {
            let depth = round - 1;
            let mut successes: Vec<BeamEntry> = Vec::new();
            for entry in &beam {
                if self.expired() {
                    break;
                }
                if should_refute(&self.goal, &entry.state_hint, round, self.cfg.refute_interval) {
                    let text = if entry.state_hint.trim().is_empty() { &self.goal } else { &entry.state_hint };
                    if self.ctx.refute(text).is_some() {
                        refuted += 1;
                        continue;
                    }
                }
                let retrieved = self.retrieve(&entry.state_hint);
                let pool = retrieved.as_ref().map(|r| r.ids()).unwrap_or_default();
                let pctx = ProposalContext {
                    goal: self.goal.clone(),
                    accepted_steps: entry.script.commands().iter().map(|s| s.to_string()).collect(),
                    state_hint: entry.state_hint.clone(),
                    helpful_facts: pool.clone(),
                    stagnation,
                    depth,
                };
                let prefix = entry.script.lines();

                if entry.subgoals <= self.cfg.finish_trigger || entry.subgoals == SENTINEL {
                    let mut cands = self.candidates(&pctx, ProposalMode::Finish);
                    if entry.subgoals == 0 && !cands.iter().any(|c| c == "done") {
                        cands.insert(0, "done".to_string());
                    }
                    for o in self.ordered(entry, &cands, CheckMode::Finish, depth, retrieved.as_ref()) {
                        if self.expired() {
                            break;
                        }
                        let rec = self.template(AttemptType::Finisher, entry, depth, &o, &pool);
                        let r = self.ctx.check(prefix, &o.command, CheckMode::Finish, rec);
                        if r.success {
                            let script = entry.script.push_command(&o.command);
                            if !script.has_holes() {
                                return finish(true, script, depth_reached.max(round), expansions, refuted);
                            }
                        }
                    }
                }
                if self.expired() {
                    break;
                }

                let cands = self.candidates(&pctx, ProposalMode::Step);
                let ordered = self.ordered(entry, &cands, CheckMode::Step, depth, retrieved.as_ref());
                let check = |o: &Ordered| -> Option<CheckResult> {
                    if self.expired() {
                        return None;
                    }
                    let rec = self.template(AttemptType::Step, entry, depth, o, &pool);
                    Some(self.ctx.check(prefix, &o.command, CheckMode::Step, rec))
                };
                let results: Vec<Option<CheckResult>> = if self.cfg.parallel && ordered.len() > 1 {
                    ordered.par_iter().map(check).collect()
                } else {
                    ordered.iter().map(check).collect()
                };
                for (o, r) in ordered.iter().zip(results) {
                    if let Some(r) = r.filter(|r| r.success) {
                        expansions += 1;
                        successes.push(BeamEntry {
                            script: entry.script.push_command(&o.command),
                            score: o.key,
                            subgoals: r.subgoals.unwrap_or(SENTINEL),
                            state_hint: r.state_hint,
                        });
                    }
                }
            }
            let next = expand_beam(successes, self.cfg.beam_width);
            if next.is_empty() {
                let partial = beam.first().map(|e| e.script.clone()).unwrap_or_else(|| ProofScript::lemma(&self.goal));
                return finish(false, partial, depth_reached, expansions, refuted);
            }
            beam = next;
            depth_reached = round;
            let min = beam[0].subgoals;
            if min < best {
                best = min;
                stagnation = 0;
            } else {
                stagnation += 1;
            }
            if self.expired() {
                break;
            }
        }
        let partial = beam.first().map(|e| e.script.clone()).unwrap_or_else(|| ProofScript::lemma(&self.goal));
        finish(false, partial, depth_reached, expansions, refuted)
    }
}

/// Beam search for `goal` inside an existing run.
pub fn prove(goal: &str, cfg: &SearchConfig, ctx: &RunContext<'_>, guidance: Guidance<'_>) -> Result<ProofResult, SearchError> {
    prove_tagged(goal, cfg, ctx, guidance, None)
}

/// As [`prove`], with a tag copied into every attempt record.
pub fn prove_tagged(
    goal: &str,
    cfg: &SearchConfig,
    ctx: &RunContext<'_>,
    guidance: Guidance<'_>,
    tag: Option<&str>,
) -> Result<ProofResult, SearchError> {
    if goal.trim().is_empty() {
        return Err(SearchError::EmptyGoal);
    }
    cfg.validate()?;
    let start = Instant::now();
    let search = Search {
        goal: goal.to_string(),
        cfg,
        ctx,
        guidance,
        start,
        deadline: start + cfg.budget_duration(),
        tag: tag.map(str::to_string),
    };
    Ok(search.run())
}

// ---------------------------------------------------------------------------
// Post-processing

fn verifies(ctx: &RunContext<'_>, script: &ProofScript, tag: &str) -> bool {
    let mut rec = ctx.record(AttemptType::Probe, script.goal());
    rec.tag = Some(tag.to_string());
    ctx.verify_full(script, rec).success
}

fn with_commands(script: &ProofScript, cmds: &[String]) -> ProofScript {
    cmds.iter().fold(ProofScript::lemma(script.goal()), |s, c| s.push_command(c))
}

/// Facts of `by (simp add: a b)` / `by (metis a b)` as (head, facts).
fn fact_list(cmd: &str) -> Option<(String, Vec<String>)> {
    let inner = cmd.trim().strip_prefix("by")?.trim().strip_prefix('(')?.strip_suffix(')')?.trim();
    if let Some(rest) = inner.strip_prefix("simp add:") {
        return Some(("simp add:".into(), rest.split_whitespace().map(str::to_string).collect()));
    }
    let rest = inner.strip_prefix("metis")?;
    if !rest.is_empty() && !rest.starts_with(' ') {
        return None;
    }
    Some(("metis".into(), rest.split_whitespace().map(str::to_string).collect()))
}

fn render_facts(head: &str, facts: &[String]) -> String {
    match (head, facts.is_empty()) {
        ("simp add:", true) => "by simp".to_string(),
        ("metis", true) => "by metis".to_string(),
        _ => format!("by ({} {})", head, facts.join(" ")),
    }
}

/// Greedy shortening under `budget`; the result always verifies and is
/// never longer than the input. Isar scripts are left alone.
pub fn minimise(script: &ProofScript, ctx: &RunContext<'_>, budget: Duration) -> ProofScript {
    let deadline = Instant::now() + budget;
    let expired = || Instant::now() >= deadline;
    let cmds: Vec<String> = script.commands().iter().map(|s| s.to_string()).collect();
    let apply_style = cmds.iter().all(|c| matches!(first_word(c), "apply" | "by" | "done"));
    if cmds.is_empty() || !apply_style || is_declaration(cmds.last().unwrap()) || !verifies(ctx, script, "minimise") {
        return script.clone();
    }
    let one_liner = |ctx: &RunContext<'_>| -> Option<ProofScript> {
        for m in ONE_LINERS {
            if expired() {
                return None;
            }
            let cand = ProofScript::lemma(script.goal()).push_command(m);
            if verifies(ctx, &cand, "minimise") {
                return Some(cand);
            }
        }
        None
    };
    if cmds.len() > 1 || !ONE_LINERS.contains(&cmds[0].as_str()) {
        if let Some(s) = one_liner(ctx) {
            return s;
        }
    }
    let mut current = cmds;
    // drop unused facts
    for i in 0..current.len() {
        let Some((head, mut facts)) = fact_list(&current[i]) else { continue };
        let mut j = 0;
        while j < facts.len() && !expired() {
            let mut fewer = facts.clone();
            fewer.remove(j);
            let mut trial = current.clone();
            trial[i] = render_facts(&head, &fewer);
            if verifies(ctx, &with_commands(script, &trial), "minimise") {
                facts = fewer;
                current = trial;
            } else {
                j += 1;
            }
        }
    }
    // delete intermediate apply lines
    let mut i = 0;
    while i < current.len() && !expired() {
        if first_word(&current[i]) == "apply" && i + 1 < current.len() {
            let mut trial = current.clone();
            trial.remove(i);
            if verifies(ctx, &with_commands(script, &trial), "minimise") {
                current = trial;
                continue;
            }
        }
        i += 1;
    }
    if current.len() > 1 {
        if let Some(s) = one_liner(ctx) {
            return s;
        }
    }
    with_commands(script, &current)
}

/// Wrap an apply-style proof in a `proof - … qed` skeleton; returns the
/// input when it is already structured or the wrapped form fails.
pub fn to_isar(script: &ProofScript, ctx: &RunContext<'_>) -> ProofScript {
    let cmds: Vec<String> = script.commands().iter().map(|s| s.to_string()).collect();
    if cmds.is_empty() || cmds.iter().any(|c| !matches!(first_word(c), "apply" | "by" | "done")) {
        return script.clone();
    }
    let mut lines = vec![script.lines()[script.header_index()].clone(), "proof -".to_string()];
    if cmds.len() == 1 && first_word(&cmds[0]) == "by" {
        lines.push(format!("  show ?thesis {}", cmds[0]));
    } else {
        lines.push("  show ?thesis".to_string());
        lines.extend(cmds.iter().map(|c| format!("    {c}")));
    }
    lines.push("qed".to_string());
    let Ok(isar) = ProofScript::from_lines(lines) else {
        return script.clone();
    };
    if verifies(ctx, &isar, "to_isar") {
        isar
    } else {
        script.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datalog::MemorySink;
    use crate::proposer::mock::{OracleProposer, ScriptedProposer};
    use crate::verifier::{generate_space, MockBackend, SyntheticSpace};

    fn entry(n: u32, len: usize, hint: &str) -> BeamEntry {
        let mut s = ProofScript::lemma("G");
        for i in 0..len.saturating_sub(1) {
            s = s.push_command(&format!("apply s{i}"));
        }
        BeamEntry { script: s, score: 0.0, state_hint: hint.to_string(), subgoals: n }
    }

    #[test]
    fn beam_order_and_dedup() {
        let b = expand_beam(vec![entry(2, 5, "a"), entry(1, 7, "b"), entry(1, 3, "c")], 4);
        let keys: Vec<(u32, usize)> = b.iter().map(|e| (e.subgoals, e.script.command_len())).collect();
        assert_eq!(keys, vec![(1, 3), (1, 7), (2, 5)]);
        let d = expand_beam(vec![entry(1, 2, "same  state"), entry(1, 3, "same state")], 4);
        assert_eq!(d.len(), 1);
        let s = expand_beam(vec![entry(SENTINEL, 1, "x"), entry(5, 9, "y")], 4);
        assert_eq!(s[1].subgoals, SENTINEL);
        assert_eq!(expand_beam(vec![entry(1, 1, "p"), entry(2, 1, "q"), entry(3, 1, "r")], 2).len(), 2);
    }

    #[test]
    fn ordering_keys() {
        let cands = vec!["apply a".to_string(), "apply b".to_string()];
        let o = order_candidates(&cands, &[], None, 2.0);
        assert_eq!(o[0].command, "apply a");
        // f = 0.9 for index 1, 0.1 for index 0 via a bias-only model on slot 0
        let mut m = RerankModel::zeros(crate::rerank::ModelKind::Logistic);
        m.weights[0] = 1.0;
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let feats = vec![
            {
                let mut x = vec![0.0; 32];
                x[0] = logit(0.1);
                x
            },
            {
                let mut x = vec![0.0; 32];
                x[0] = logit(0.9);
                x
            },
        ];
        let o = order_candidates(&cands, &feats, Some(&m), 10.0);
        assert_eq!(o[0].command, "apply b");
        assert!((o[0].key + 8.0).abs() < 1e-9 && (o[1].key + 1.0).abs() < 1e-9);
        let same = vec![vec![0.0; 32], vec![0.0; 32]];
        let o = order_candidates(&cands, &same, Some(&RerankModel::zeros(crate::rerank::ModelKind::Logistic)), 0.0);
        assert_eq!(o[0].index, 0);
    }

    #[test]
    fn refute_gate() {
        assert!(should_refute("∀x. P x", "", 4, 2));
        assert!(!should_refute("∀x. P x", "", 3, 2));
        assert!(!should_refute("a + b = b + a", "", 4, 2));
        assert!(should_refute("A --> B", "", 3, 3));
    }

    fn run(space: SyntheticSpace, cfg: &SearchConfig) -> (ProofResult, MemorySink, MockBackend) {
        let goal = space.root_goal();
        let proposer = OracleProposer::new(space.clone(), 2, 1);
        let backend = MockBackend::new(space).unwrap();
        let sink = MemorySink::new();
        let r = prove_goal(&goal, cfg, &backend, Guidance::new(&proposer), &sink, StepCache::isolated()).unwrap();
        (r, sink, backend)
    }

    #[test]
    fn solves_small_space() {
        let space = generate_space(2, 2, 1, 11);
        let cfg = SearchConfig { beam_width: 2, max_depth: 3, ..Default::default() };
        let (r, sink, backend) = run(space.clone(), &cfg);
        assert!(r.solved, "{r:?}");
        let check = crate::verifier::verify_full(&backend, &r.script, Duration::from_secs(1)).unwrap();
        assert!(check.success);
        let runs = sink.runs();
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].stats.verifier_calls as usize, sink.attempts().len());
        assert!(runs[0].success && runs[0].final_proof.is_some());
    }

    #[test]
    fn unsolvable_space() {
        let space = generate_space(3, 2, 0, 5);
        let cfg = SearchConfig { beam_width: 2, max_depth: 3, ..Default::default() };
        let (r, _, _) = run(space, &cfg);
        assert!(!r.solved);
        assert!(r.depth_reached <= 3);
    }

    #[test]
    fn tiny_budget() {
        let space = generate_space(6, 3, 1, 2);
        let cfg = SearchConfig { budget: 0.001, max_depth: 6, ..Default::default() };
        let (r, _, _) = run(space, &cfg);
        assert!(!r.solved);
        assert!(r.elapsed < Duration::from_millis(500));
    }

    #[test]
    fn empty_goal_and_bad_config() {
        let space = generate_space(2, 2, 1, 1);
        let backend = MockBackend::new(space).unwrap();
        let sink = MemorySink::new();
        let p = ScriptedProposer::new();
        let ctx = RunContext::new("r", &backend, &sink, StepCache::isolated());
        assert_eq!(prove(" ", &SearchConfig::default(), &ctx, Guidance::new(&p)).unwrap_err(), SearchError::EmptyGoal);
        let bad = SearchConfig { beam_width: 0, ..Default::default() };
        assert!(matches!(prove("g", &bad, &ctx, Guidance::new(&p)), Err(SearchError::InvalidConfig(_))));
    }

    fn fixture() -> SyntheticSpace {
        SyntheticSpace::from_json(
            r#"{
              "root": "r",
              "nodes": {"r": {"subgoals": 2, "goal": "A ∧ B"}, "m": {"subgoals": 1}, "t": {"subgoals": 0}},
              "edges": [
                {"from": "r", "cmd": "apply simp", "to": "m"},
                {"from": "m", "cmd": "by auto", "to": "t"},
                {"from": "r", "cmd": "by simp", "to": "t"},
                {"from": "m", "cmd": "by (simp add: a b)", "to": "t"},
                {"from": "m", "cmd": "by (simp add: a)", "to": "t"}
              ]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn minimise_to_one_liner() {
        let backend = MockBackend::new(fixture()).unwrap();
        let sink = MemorySink::new();
        let ctx = RunContext::new("r", &backend, &sink, StepCache::isolated());
        let s = ProofScript::parse("lemma \"A ∧ B\"\n  apply simp\n  by auto").unwrap();
        let m = minimise(&s, &ctx, Duration::from_secs(5));
        assert_eq!(m.commands(), vec!["by simp"]);
        let single = ProofScript::parse("lemma \"A ∧ B\"\n  by simp").unwrap();
        assert_eq!(minimise(&single, &ctx, Duration::from_secs(5)), single);
    }

    #[test]
    fn minimise_drops_unused_fact() {
        let mut space = fixture();
        space.edges.retain(|e| e.cmd != "by simp");
        let backend = MockBackend::new(space).unwrap();
        let sink = MemorySink::new();
        let ctx = RunContext::new("r", &backend, &sink, StepCache::isolated());
        let s = ProofScript::parse("lemma \"A ∧ B\"\n  apply simp\n  by (simp add: a b)").unwrap();
        let m = minimise(&s, &ctx, Duration::from_secs(5));
        assert_eq!(m.commands(), vec!["apply simp", "by (simp add: a)"]);
        assert!(m.len() <= s.len());
    }

    #[test]
    fn isar_wrapping() {
        let backend = MockBackend::new(fixture()).unwrap();
        let sink = MemorySink::new();
        let ctx = RunContext::new("r", &backend, &sink, StepCache::isolated());
        let s = ProofScript::parse("lemma \"A ∧ B\"\n  by simp").unwrap();
        assert_eq!(to_isar(&s, &ctx).render(), "lemma \"A ∧ B\"\nproof -\n  show ?thesis by simp\nqed");
        let isar = ProofScript::parse("lemma \"A ∧ B\"\nproof -\n  show ?thesis by simp\nqed").unwrap();
        assert_eq!(to_isar(&isar, &ctx), isar);
        let broken = ProofScript::parse("lemma \"A ∧ B\"\n  apply nothing\n  by simp").unwrap();
        assert_eq!(to_isar(&broken, &ctx), broken);
    }
}
