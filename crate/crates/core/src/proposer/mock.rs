//! Deterministic proposers for tests and desk-scale runs.

use super::{mode_of_prompt, prompt_section, ProposalMode, ProposerBackend, ProposerError};
use crate::fingerprint::{sha1_hex, state_fingerprint};
use crate::verifier::mock::state_id_of;
use crate::verifier::SyntheticSpace;
use parking_lot::Mutex;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Entry {
    /// A sequence of completions, one per call; the last one repeats.
    Responses(Vec<Vec<String>>),
    /// Lines returned on every call.
    Lines(Vec<String>),
}

/// Replays canned completions. Lookup keys, in order: fingerprint of the
/// prompt's `STATE:` section, fingerprint of its `GOAL:` section,
/// `mode:<mode>`, `*`.
pub struct ScriptedProposer {
    table: BTreeMap<String, Entry>,
    cursors: Mutex<HashMap<String, usize>>,
    calls: AtomicUsize,
}

impl ScriptedProposer {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::from_table(serde_json::from_str(text)?))
    }

    pub fn load(path: &Path) -> Result<Self, ProposerError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProposerError::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| ProposerError::Fixture(format!("{}: {e}", path.display())))
    }

    fn from_table(table: BTreeMap<String, Entry>) -> Self {
        ScriptedProposer { table, cursors: Mutex::new(HashMap::new()), calls: AtomicUsize::new(0) }
    }

    pub fn new() -> Self {
        Self::from_table(BTreeMap::new())
    }

    /// Same completion lines on every call for `key`.
    pub fn with_lines(mut self, key: &str, lines: &[&str]) -> Self {
        self.table.insert(key.to_string(), Entry::Lines(lines.iter().map(|s| s.to_string()).collect()));
        self
    }

    /// Successive completions for `key`.
    pub fn with_responses(mut self, key: &str, responses: &[&str]) -> Self {
        let rs = responses.iter().map(|r| r.lines().map(str::to_string).collect()).collect();
        self.table.insert(key.to_string(), Entry::Responses(rs));
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Key for a prompt section as used in fixtures.
    pub fn key_for(text: &str) -> String {
        state_fingerprint(text).into_string()
    }

    fn lookup(&self, system: &str, user: &str) -> Option<(String, &Entry)> {
        let mut keys = Vec::new();
        if let Some(s) = prompt_section(user, "STATE:") {
            keys.push(Self::key_for(s));
        }
        if let Some(g) = prompt_section(user, "GOAL:") {
            keys.push(Self::key_for(g));
        }
        if let Some(m) = mode_of_prompt(system) {
            keys.push(format!("mode:{}", m.as_str()));
        }
        keys.push("*".to_string());
        keys.into_iter().find_map(|k| self.table.get(&k).map(|e| (k, e)))
    }
}

impl Default for ScriptedProposer {
    fn default() -> Self {
        Self::new()
    }
}

impl ProposerBackend for ScriptedProposer {
    fn complete(&self, system: &str, user: &str, _t: f64, _n: usize) -> Result<String, ProposerError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let Some((key, entry)) = self.lookup(system, user) else {
            return Ok(String::new());
        };
        Ok(match entry {
            Entry::Lines(lines) => lines.join("\n"),
            Entry::Responses(rs) if rs.is_empty() => String::new(),
            Entry::Responses(rs) => {
                let mut cursors = self.cursors.lock();
                let i = cursors.entry(key).or_insert(0);
                let out = rs[(*i).min(rs.len() - 1)].join("\n");
                *i += 1;
                out
            }
        })
    }

    fn name(&self) -> &str {
        "scripted"
    }
}

const NOISE_APPLY: &[&str] = &[
    "apply (simp add: foo_def)",
    "apply (metis)",
    "apply (rule ccontr)",
    "apply presburger",
    "apply (clarsimp)",
    "apply (induct rule: list.induct)",
];

const NOISE_FINISH: &[&str] = &["by (metis)", "by presburger", "by (smt (verit))", "by linarith"];

/// Proposes the true outgoing edges of the state named in the prompt, mixed
/// with `noise` wrong commands, in a seeded order.
pub struct OracleProposer {
    space: SyntheticSpace,
    noise: usize,
    seed: u64,
    calls: AtomicUsize,
}

impl OracleProposer {
    pub fn new(space: SyntheticSpace, noise: usize, seed: u64) -> Self {
        OracleProposer { space, noise, seed, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn state_of(&self, user: &str) -> Option<String> {
        if let Some(id) = prompt_section(user, "STATE:").and_then(state_id_of) {
            return Some(id.to_string());
        }
        let goal = prompt_section(user, "GOAL:")?;
        Some(self.space.resolve_goal(goal).unwrap_or(&self.space.root).to_string())
    }
}

impl ProposerBackend for OracleProposer {
    fn complete(&self, system: &str, user: &str, temperature: f64, _n: usize) -> Result<String, ProposerError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mode = mode_of_prompt(system).unwrap_or(ProposalMode::Step);
        let Some(state) = self.state_of(user) else {
            return Ok(String::new());
        };
        let finishing = |c: &str| c.starts_with("by ") || c == "done";
        let mut out: Vec<String> = match mode {
            ProposalMode::Step => self
                .space
                .outgoing(&state)
                .filter(|e| e.cmd.starts_with("apply "))
                .map(|e| e.cmd.clone())
                .collect(),
            ProposalMode::Finish => self
                .space
                .outgoing(&state)
                .filter(|e| finishing(&e.cmd))
                .map(|e| e.cmd.clone())
                .collect(),
            ProposalMode::Outline => {
                let goal = prompt_section(user, "GOAL:").map(str::to_string).unwrap_or_else(|| self.space.root_goal());
                return Ok(format!("lemma \"{goal}\"\nproof -\n  show ?thesis\n    sorry\nqed"));
            }
            ProposalMode::Repair => return Ok(String::new()),
        };
        let pool = if mode == ProposalMode::Finish { NOISE_FINISH } else { NOISE_APPLY };
        let digest = sha1_hex(&format!("{user}\u{0}{temperature}"));
        let mix = u64::from_str_radix(&digest[..16], 16).unwrap_or(0);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ mix);
        let mut noise: Vec<&str> = pool.iter().copied().filter(|c| self.space.step(&state, c).is_none()).collect();
        noise.shuffle(&mut rng);
        out.extend(noise.into_iter().take(self.noise).map(str::to_string));
        out.shuffle(&mut rng);
        Ok(out.join("\n"))
    }

    fn name(&self) -> &str {
        "oracle"
    }
}

#[cfg(test)]
mod tests {
    use super::super::{propose, ProposalContext};
    use super::*;
    use crate::verifier::generate_space;

    #[test]
    fn scripted_lookup_order() {
        let state = "STATE s1\ngoal (1 subgoal):";
        let p = ScriptedProposer::new()
            .with_lines(&ScriptedProposer::key_for(state), &["apply simp"])
            .with_lines("mode:finish", &["by auto"])
            .with_lines("*", &["apply blast"]);
        let ctx = ProposalContext { goal: "G".into(), state_hint: state.into(), ..Default::default() };
        assert_eq!(propose(&p, &ctx, ProposalMode::Step, 6).unwrap(), vec!["apply simp"]);
        let other = ProposalContext { goal: "G".into(), ..Default::default() };
        assert_eq!(propose(&p, &other, ProposalMode::Finish, 6).unwrap(), vec!["by auto"]);
        assert_eq!(propose(&p, &other, ProposalMode::Step, 6).unwrap(), vec!["apply blast"]);
        assert_eq!(p.calls(), 3);
    }

    #[test]
    fn scripted_sequences_repeat_last() {
        let p = ScriptedProposer::from_json(r#"{"*": [["apply a"], ["apply b"]]}"#).unwrap();
        let ctx = ProposalContext::default();
        let got: Vec<_> = (0..3).map(|_| propose(&p, &ctx, ProposalMode::Step, 6).unwrap()).collect();
        assert_eq!(got, vec![vec!["apply a"], vec!["apply b"], vec!["apply b"]]);
    }

    #[test]
    fn oracle_proposes_true_edges() {
        let space = generate_space(3, 3, 2, 4);
        let o = OracleProposer::new(space.clone(), 2, 1);
        let ctx = ProposalContext { goal: space.root_goal(), ..Default::default() };
        let got = propose(&o, &ctx, ProposalMode::Step, 10).unwrap();
        for e in space.outgoing(&space.root).filter(|e| e.cmd.starts_with("apply ")) {
            assert!(got.contains(&e.cmd));
        }
        assert_eq!(got, propose(&o, &ctx, ProposalMode::Step, 10).unwrap());
    }
}
