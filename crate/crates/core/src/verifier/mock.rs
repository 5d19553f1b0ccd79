//! Deterministic backend that replays a [`SyntheticSpace`] transition table.
//!
//! The assembled theory is interpreted command by command against a small
//! goal stack: apply-style commands walk table edges, structured blocks
//! (`proof`/`qed`, `have`/`show`) push and pop frames, and `sorry` closes
//! whatever goal is on top.

use super::space::{FixtureError, SyntheticSpace};
use super::{BackendError, CounterexampleReport, CounterexampleSource, RawOutcome, VerifierBackend};
use crate::script_model::{first_word, line_commands, quoted_text, statement_keyword};
use parking_lot::Mutex;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

pub const NO_SUCH_STEP: &str = "no such step";

#[derive(Debug, Clone)]
enum Frame {
    /// A goal in prove mode. `state` is `None` for statements the table
    /// does not know.
    Goal { state: Option<String>, text: String, failed: bool },
    /// A structured `proof ... qed` block.
    Block { state: Option<String>, text: String, shown: bool, failed: bool },
}

struct Interp<'a> {
    space: &'a SyntheticSpace,
    stack: Vec<Frame>,
    errors: Vec<(usize, String)>,
    printed: Option<String>,
    last_render: String,
}

#[derive(Default)]
struct Health {
    down: bool,
    fail_next: usize,
    panic_next: usize,
}

pub struct MockBackend {
    space: SyntheticSpace,
    calls: AtomicUsize,
    sessions: AtomicUsize,
    health: Mutex<Health>,
}

impl MockBackend {
    pub fn new(space: SyntheticSpace) -> Result<Self, FixtureError> {
        space.validate()?;
        Ok(MockBackend {
            space,
            calls: AtomicUsize::new(0),
            sessions: AtomicUsize::new(1),
            health: Mutex::new(Health::default()),
        })
    }

    pub fn from_json(text: &str) -> Result<Self, FixtureError> {
        Self::new(SyntheticSpace::from_json(text)?)
    }

    pub fn space(&self) -> &SyntheticSpace {
        &self.space
    }

    /// Number of `check_theory` calls that reached the interpreter.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Sessions started so far (1 + restarts).
    pub fn sessions(&self) -> usize {
        self.sessions.load(Ordering::SeqCst)
    }

    /// Make the next `n` checks fail with a dead session; the backend stays
    /// down until restarted.
    pub fn inject_crash(&self, n: usize) {
        self.health.lock().fail_next += n;
    }

    /// Make the next `n` checks panic.
    pub fn inject_panic(&self, n: usize) {
        self.health.lock().panic_next += n;
    }

    /// Render the proof state of a table node.
    pub fn render_state(&self, id: &str) -> String {
        render_node(&self.space, Some(id), "")
    }
}

pub fn render_node(space: &SyntheticSpace, id: Option<&str>, fallback_goal: &str) -> String {
    let Some(id) = id else {
        return format!("goal (1 subgoal):\n 1. {}", fallback_goal);
    };
    let Some(node) = space.node(id) else {
        return format!("goal (1 subgoal):\n 1. {}", fallback_goal);
    };
    if node.subgoals == 0 {
        return format!("STATE {id}\nNo subgoals!");
    }
    let mut out = format!("STATE {id}\n");
    if node.subgoals == 1 {
        out.push_str("goal (1 subgoal):");
    } else {
        out.push_str(&format!("goal ({} subgoals):", node.subgoals));
    }
    if let Some(g) = &node.goal {
        out.push_str(&format!("\n 1. {g}"));
    }
    if !node.facts.is_empty() {
        out.push_str("\nfacts:");
        for f in &node.facts {
            out.push_str(&format!("\n  {f}"));
        }
    }
    out
}

/// State id named on a `STATE <id>` line, if any.
pub fn state_id_of(text: &str) -> Option<&str> {
    text.lines()
        .find_map(|l| l.trim().strip_prefix("STATE "))
        .map(str::trim)
}

impl<'a> Interp<'a> {
    fn new(space: &'a SyntheticSpace) -> Self {
        Interp { space, stack: vec![], errors: vec![], printed: None, last_render: String::new() }
    }

    fn subgoals(&self, state: &Option<String>) -> Option<u32> {
        state.as_ref().and_then(|s| self.space.node(s)).map(|n| n.subgoals)
    }

    fn render_top(&self) -> String {
        match self.stack.last() {
            None => "No subgoals!".to_string(),
            Some(Frame::Goal { state, text, .. }) | Some(Frame::Block { state, text, .. }) => {
                render_node(self.space, state.as_deref(), text)
            }
        }
    }

    fn fail(&mut self, line: usize, msg: &str) {
        self.errors.push((line, msg.to_string()));
        match self.stack.last_mut() {
            Some(Frame::Goal { failed, .. }) | Some(Frame::Block { failed, .. }) => *failed = true,
            None => {}
        }
    }

    fn resolve(&self, stmt_text: Option<String>) -> (Option<String>, String) {
        match stmt_text {
            Some(t) if t.trim() == "?thesis" => self.block_goal(),
            Some(t) => (self.space.resolve_goal(&t).map(str::to_string), t),
            None => self.block_goal(),
        }
    }

    fn block_goal(&self) -> (Option<String>, String) {
        for f in self.stack.iter().rev() {
            if let Frame::Block { state, text, .. } = f {
                return (state.clone(), text.clone());
            }
        }
        (None, "?thesis".to_string())
    }

    fn step(&self, state: &Option<String>, cmd: &str) -> Option<String> {
        state.as_ref().and_then(|s| self.space.step(s, cmd)).map(str::to_string)
    }

    fn command(&mut self, line: usize, cmd: &str) {
        let word = first_word(cmd);
        if word == "print_state" {
            let r = self.render_top();
            self.printed = Some(r);
            return;
        }
        if word == "lemma" || word == "theorem" || word == "corollary" || word == "schematic_goal" {
            let text = quoted_text(cmd).unwrap_or_default();
            let state = self
                .space
                .resolve_goal(&text)
                .map(str::to_string)
                .or_else(|| Some(self.space.root.clone()));
            self.stack.push(Frame::Goal { state, text, failed: false });
            return;
        }
        if self.stack.is_empty() {
            self.errors.push((line, "no goal to apply command to".to_string()));
            return;
        }
        if statement_keyword(cmd).is_some() {
            self.statement(line, cmd);
            return;
        }
        match word {
            "apply" => self.apply(line, cmd),
            "by" => self.by(line, cmd),
            "done" => self.done(line),
            "sorry" | "oops" => self.sorry(),
            "proof" => self.proof(line, cmd),
            "qed" => self.qed(line),
            "next" | "case" | "fix" | "assume" | "note" | "using" | "unfolding" | "then" | "from"
            | "with" | "let" | "define" | "moreover" | "ultimately" | "also" | "finally" | "txt"
            | "text" | "defer" | "prefer" | "subgoal" | "supply" | "including" => {}
            _ => {
                if self.top_failed() {
                    return;
                }
                self.fail(line, &format!("unknown command: {}", word));
            }
        }
    }

    fn top_failed(&self) -> bool {
        matches!(self.stack.last(), Some(Frame::Goal { failed: true, .. }) | Some(Frame::Block { failed: true, .. }))
    }

    fn apply(&mut self, line: usize, cmd: &str) {
        if self.top_failed() {
            return;
        }
        let next = match self.stack.last().unwrap() {
            Frame::Goal { state, .. } | Frame::Block { state, .. } => self.step(state, cmd),
        };
        match next {
            Some(to) => match self.stack.last_mut().unwrap() {
                Frame::Goal { state, .. } | Frame::Block { state, .. } => *state = Some(to),
            },
            None => self.fail(line, NO_SUCH_STEP),
        }
    }

    fn by(&mut self, line: usize, cmd: &str) {
        if self.top_failed() {
            self.stack.pop();
            return;
        }
        let Some(Frame::Goal { state, .. }) = self.stack.last() else {
            self.fail(line, "terminal proof outside prove mode");
            return;
        };
        let state = state.clone();
        let method = cmd.trim().strip_prefix("by").unwrap_or("").trim();
        let to = self
            .step(&state, cmd)
            .or_else(|| self.step(&state, &format!("apply {method}")));
        match to {
            None => self.fail(line, NO_SUCH_STEP),
            Some(t) if self.space.is_terminal(&t) => {}
            Some(_) => self.fail(line, "failed to finish proof"),
        }
        // a failed statement still closes, so later lines get checked
        self.stack.pop();
    }

    fn done(&mut self, line: usize) {
        if self.top_failed() {
            self.stack.pop();
            return;
        }
        match self.stack.last() {
            Some(Frame::Goal { state, .. }) if self.subgoals(state) == Some(0) => {
                self.stack.pop();
            }
            _ => {
                self.fail(line, "failed to finish proof");
                self.stack.pop();
            }
        }
    }

    fn sorry(&mut self) {
        match self.stack.last_mut() {
            Some(Frame::Block { shown, .. }) => *shown = true,
            Some(Frame::Goal { .. }) => {
                self.stack.pop();
            }
            None => {}
        }
    }

    fn proof(&mut self, line: usize, cmd: &str) {
        let Some(Frame::Goal { state, text, failed }) = self.stack.last().cloned() else {
            self.fail(line, "proof outside prove mode");
            return;
        };
        let method = cmd.trim().strip_prefix("proof").unwrap_or("").trim();
        let (state, failed) = if failed || method.is_empty() || method == "-" {
            (state, failed)
        } else {
            let m = method.trim_start_matches('(').trim_end_matches(')');
            match self.step(&state, &format!("apply {m}")).or_else(|| self.step(&state, &format!("apply ({m})"))) {
                Some(to) => (Some(to), false),
                None => {
                    self.errors.push((line, NO_SUCH_STEP.to_string()));
                    (state, true)
                }
            }
        };
        *self.stack.last_mut().unwrap() = Frame::Block { state, text, shown: false, failed };
    }

    fn qed(&mut self, line: usize) {
        match self.stack.last() {
            Some(Frame::Block { shown, failed, state, .. }) => {
                let done = *shown || self.subgoals(state) == Some(0);
                if !done && !failed {
                    self.errors.push((line, "failed to finish proof".to_string()));
                }
                self.stack.pop();
            }
            Some(Frame::Goal { failed: true, .. }) => {
                // a failed goal swallowed the block opener; close both
                self.stack.pop();
                if matches!(self.stack.last(), Some(Frame::Block { .. })) {
                    self.stack.pop();
                }
            }
            _ => self.fail(line, "qed without matching proof"),
        }
    }

    fn statement(&mut self, line: usize, cmd: &str) {
        let kw = statement_keyword(cmd).unwrap_or("have");
        match self.stack.last_mut() {
            Some(Frame::Block { shown, .. }) => {
                if kw == "show" || kw == "thus" {
                    *shown = true;
                }
            }
            _ => {
                self.fail(line, "statement not allowed in prove mode");
                return;
            }
        }
        let quoted = quoted_text(cmd);
        let stmt = if quoted.is_none() && cmd.contains("?thesis") { Some("?thesis".to_string()) } else { quoted };
        let (state, text) = self.resolve(stmt);
        self.stack.push(Frame::Goal { state, text, failed: false });
    }

    fn run(mut self, theory: &str) -> RawOutcome {
        let lines: Vec<&str> = theory.lines().collect();
        let last = lines.len().saturating_sub(1);
        let mut last_code = 0;
        for (i, line) in lines.iter().enumerate() {
            let t = line.trim();
            if i == 0 && t.starts_with("theory") {
                continue;
            }
            if i == last && t == "end" {
                break;
            }
            if t.is_empty() || t.starts_with("(*") {
                continue;
            }
            last_code = i;
            for cmd in line_commands(line) {
                self.command(i, &cmd);
            }
            self.last_render = self.render_top();
        }
        if !self.stack.is_empty() {
            self.errors.push((last_code, "unfinished proof".to_string()));
        }
        let state_hint = self.printed.take().unwrap_or_else(|| {
            if self.stack.is_empty() && self.errors.is_empty() {
                "No subgoals!".to_string()
            } else {
                self.last_render.clone()
            }
        });
        RawOutcome { accepted: self.errors.is_empty(), state_hint, errors: self.errors }
    }
}

impl VerifierBackend for MockBackend {
    fn check_theory(&self, theory: &str, _timeout: Duration) -> Result<RawOutcome, BackendError> {
        {
            let mut h = self.health.lock();
            if h.panic_next > 0 {
                h.panic_next -= 1;
                drop(h);
                panic!("mock backend panic");
            }
            if h.fail_next > 0 {
                h.fail_next -= 1;
                h.down = true;
            }
            if h.down {
                return Err(BackendError::Down("session terminated".into()));
            }
        }
        self.calls.fetch_add(1, Ordering::SeqCst);
        if !self.space.timeouts.is_empty()
            && theory.lines().any(|l| self.space.timeouts.iter().any(|t| t.trim() == l.trim()))
        {
            return Err(BackendError::Timeout);
        }
        Ok(Interp::new(&self.space).run(theory))
    }

    fn restart(&self) -> Result<(), BackendError> {
        self.health.lock().down = false;
        self.sessions.fetch_add(1, Ordering::SeqCst);
        Ok(())
    }

    fn refute(&self, goal_or_state: &str, _timeout: Duration) -> Option<CounterexampleReport> {
        let table = &self.space.refutable;
        let key = match state_id_of(goal_or_state) {
            Some(id) => id.to_string(),
            None => {
                let text = goal_or_state.trim();
                let norm = super::space::normalize_stmt(text);
                if let Some((k, _)) = table.iter().find(|(k, _)| super::space::normalize_stmt(k) == norm) {
                    k.clone()
                } else {
                    self.space.resolve_goal(text)?.to_string()
                }
            }
        };
        let bindings = table.get(&key)?.clone();
        Some(CounterexampleReport { bindings, source: CounterexampleSource::Mock })
    }

    fn name(&self) -> &str {
        "mock"
    }
}

#[cfg(test)]
mod tests {
    use super::super::{check_step, gapped_check, refute, verify_full, CheckMode, StepCache};
    use super::*;
    use crate::script_model::ProofScript;

    const FIXTURE: &str = r#"{
      "root": "r",
      "nodes": {
        "r": {"subgoals": 2, "goal": "rev (rev xs) = xs"},
        "a": {"subgoals": 1, "goal": "rev [] = []", "facts": ["rev_rev_ident"]},
        "t": {"subgoals": 0},
        "h": {"subgoals": 1, "goal": "A"},
        "ht": {"subgoals": 0}
      },
      "edges": [
        {"from": "r", "cmd": "apply simp", "to": "a"},
        {"from": "a", "cmd": "by auto", "to": "t"},
        {"from": "a", "cmd": "apply auto", "to": "t"},
        {"from": "r", "cmd": "apply (induction xs)", "to": "a"},
        {"from": "h", "cmd": "by simp", "to": "ht"}
      ],
      "refutable": {"r": [["xs", "[a]"]], "False": [["x", "0"]]},
      "goals": {"A": "h"},
      "timeouts": ["apply slow"]
    }"#;

    fn mock() -> MockBackend {
        MockBackend::from_json(FIXTURE).unwrap()
    }

    fn prefix() -> Vec<String> {
        vec!["lemma \"rev (rev xs) = xs\"".to_string()]
    }

    const T: Duration = Duration::from_secs(5);

    #[test]
    fn step_follows_edge() {
        let m = mock();
        let c = StepCache::isolated();
        let r = check_step(&m, &c, &prefix(), "apply simp", CheckMode::Step, T).unwrap();
        assert!(r.success);
        assert_eq!(r.subgoals, Some(1));
        assert!(r.state_hint.starts_with("STATE a\ngoal (1 subgoal):\n 1. rev [] = []"));
        assert!(r.state_hint.contains("facts:\n  rev_rev_ident"));
    }

    #[test]
    fn missing_edge_fails() {
        let m = mock();
        let c = StepCache::isolated();
        let r = check_step(&m, &c, &prefix(), "apply blast", CheckMode::Step, T).unwrap();
        assert!(!r.success);
        assert_eq!(r.errors, vec![(1, NO_SUCH_STEP.to_string())]);
        let mut p = prefix();
        p.push("apply simp".into());
        let r = check_step(&m, &c, &p, "apply blast", CheckMode::Step, T).unwrap();
        assert!(!r.success);
        assert_eq!(r.errors[0].0, 2);
    }

    #[test]
    fn finish_mode_reaches_terminal() {
        let m = mock();
        let c = StepCache::isolated();
        let mut p = prefix();
        p.push("apply simp".into());
        let r = check_step(&m, &c, &p, "by auto", CheckMode::Finish, T).unwrap();
        assert!(r.success);
        assert_eq!(r.subgoals, Some(0));
        let r = check_step(&m, &c, &p, "apply auto", CheckMode::Finish, T).unwrap();
        assert!(!r.success, "apply leaves the goal open without done");
        let r = check_step(&m, &c, &prefix(), "by auto", CheckMode::Finish, T).unwrap();
        assert!(!r.success);
    }

    #[test]
    fn cache_hit_skips_backend() {
        let m = mock();
        let c = StepCache::isolated();
        let a = check_step(&m, &c, &prefix(), "apply simp", CheckMode::Step, T).unwrap();
        let b = check_step(&m, &c, &prefix(), "apply simp", CheckMode::Step, T).unwrap();
        assert_eq!(m.calls(), 1);
        assert!(b.cache_hit && !a.cache_hit);
        assert!(a.same_payload(&b));
    }

    #[test]
    fn timeouts_are_not_cached() {
        let m = mock();
        let c = StepCache::isolated();
        assert!(check_step(&m, &c, &prefix(), "apply slow", CheckMode::Step, T).is_err());
        assert!(check_step(&m, &c, &prefix(), "apply slow", CheckMode::Step, T).is_err());
        assert_eq!(m.calls(), 2);
    }

    #[test]
    fn full_verification() {
        let m = mock();
        let ok = ProofScript::parse("lemma \"rev (rev xs) = xs\"\n  apply simp\n  apply auto\n  done").unwrap();
        assert!(verify_full(&m, &ok, T).unwrap().success);
        let gap = ProofScript::parse("lemma \"rev (rev xs) = xs\"\n  apply simp\n  sorry").unwrap();
        assert!(gapped_check(&m, &gap, T).unwrap().success);
        assert!(!verify_full(&m, &gap, T).unwrap().success);
        let bad = ProofScript::parse("lemma \"rev (rev xs) = xs\"\n  apply simp\n  apply blast\n  done").unwrap();
        let r = verify_full(&m, &bad, T).unwrap();
        assert!(!r.success);
        assert_eq!(r.errors[0].0, 2);
    }

    #[test]
    fn structured_proof_with_statements() {
        let m = mock();
        let s = ProofScript::parse(
            "lemma \"rev (rev xs) = xs\"\nproof -\n  have \"A\" by simp\n  show ?thesis\n    apply simp\n    by auto\nqed",
        )
        .unwrap();
        let r = verify_full(&m, &s, T).unwrap();
        assert!(r.success, "{:?}", r.errors);
        let s = ProofScript::parse(
            "lemma \"rev (rev xs) = xs\"\nproof -\n  have \"A\" by auto\n  show ?thesis\n    sorry\nqed",
        )
        .unwrap();
        let r = gapped_check(&m, &s, T).unwrap();
        assert_eq!(r.errors, vec![(2, NO_SUCH_STEP.to_string())]);
        let s = ProofScript::parse("lemma \"rev (rev xs) = xs\"\nproof -\n  have \"A\" by simp\nqed").unwrap();
        let r = gapped_check(&m, &s, T).unwrap();
        assert_eq!(r.errors, vec![(3, "failed to finish proof".to_string())]);
    }

    #[test]
    fn several_failures_reported() {
        let m = mock();
        let s = ProofScript::parse(
            "lemma \"rev (rev xs) = xs\"\nproof -\n  have \"A\"\n    by auto\n  show ?thesis\n    apply blast\n    done\nqed",
        )
        .unwrap();
        let r = gapped_check(&m, &s, T).unwrap();
        let lines: Vec<usize> = r.errors.iter().map(|e| e.0).collect();
        assert_eq!(lines, vec![3, 5]);
    }

    #[test]
    fn refutation_table() {
        let m = mock();
        let r = refute(&m, "False", T).unwrap();
        assert_eq!(r.bindings, vec![("x".to_string(), "0".to_string())]);
        assert!(refute(&m, &m.render_state("r"), T).is_some());
        assert!(refute(&m, "rev (rev xs) = xs", T).is_some());
        assert!(refute(&m, "True", T).is_none());
        assert!(refute(&m, &m.render_state("a"), T).is_none());
    }

    #[test]
    fn crash_until_restart() {
        let m = mock();
        let c = StepCache::isolated();
        m.inject_crash(1);
        assert!(check_step(&m, &c, &prefix(), "apply simp", CheckMode::Step, T).is_err());
        assert!(check_step(&m, &c, &prefix(), "apply simp", CheckMode::Step, T).is_err());
        m.restart().unwrap();
        assert_eq!(m.sessions(), 2);
        assert!(check_step(&m, &c, &prefix(), "apply simp", CheckMode::Step, T).unwrap().success);
    }

    #[test]
    fn invalid_fixture_rejected() {
        assert!(MockBackend::from_json(r#"{"root":"x","nodes":{},"edges":[]}"#).is_err());
    }
}
