//! The language model as a proposal source: prompt construction, temperature
//! schedule, output sanitisation and heuristic candidates.

pub mod http;
pub mod mock;

pub use http::HttpProposer;
pub use mock::{OracleProposer, ScriptedProposer};

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

pub const DEFAULT_BATCH: usize = 6;
pub const INJECTION_THRESHOLD: u32 = 3;
pub const MAX_LINE_LEN: usize = 200;
pub const MAX_RULE_TEMPLATES: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProposerError {
    #[error("proposer unavailable: {0}")]
    Unavailable(String),
    #[error("bad proposer fixture: {0}")]
    Fixture(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalMode {
    Step,
    Finish,
    Outline,
    Repair,
}

impl ProposalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ProposalMode::Step => "step",
            ProposalMode::Finish => "finish",
            ProposalMode::Outline => "outline",
            ProposalMode::Repair => "repair",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "step" => Some(ProposalMode::Step),
            "finish" => Some(ProposalMode::Finish),
            "outline" => Some(ProposalMode::Outline),
            "repair" => Some(ProposalMode::Repair),
            _ => None,
        }
    }
}

/// What the proposer sees about the search at one beam entry.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProposalContext {
    pub goal: String,
    pub accepted_steps: Vec<String>,
    pub state_hint: String,
    pub helpful_facts: Vec<String>,
    pub stagnation: u32,
    pub depth: u32,
}

pub trait ProposerBackend: Send + Sync {
    fn complete(&self, system: &str, user: &str, temperature: f64, max_samples: usize) -> Result<String, ProposerError>;

    fn name(&self) -> &str;
}

pub fn step_temperature(s: u32) -> f64 {
    (0.5 + 0.1 * s as f64).min(0.9)
}

pub fn finish_temperature(s: u32) -> f64 {
    (0.2 + 0.05 * s as f64).min(0.6)
}

pub fn temperature(mode: ProposalMode, s: u32) -> f64 {
    match mode {
        ProposalMode::Finish => finish_temperature(s),
        _ => step_temperature(s),
    }
}

/// `MODE: <mode>` line embedded in every system prompt.
pub fn mode_line(mode: ProposalMode) -> String {
    format!("MODE: {}", mode.as_str())
}

/// The mode named in a system prompt, if any.
pub fn mode_of_prompt(system: &str) -> Option<ProposalMode> {
    system
        .lines()
        .find_map(|l| l.trim().strip_prefix("MODE:"))
        .and_then(ProposalMode::parse)
}

pub fn system_prompt(mode: ProposalMode) -> String {
    match mode {
        ProposalMode::Step | ProposalMode::Finish => {
            let grammar = if mode == ProposalMode::Step {
                "Each line must be a single command starting with `apply `."
            } else {
                "Each line must be `done` or a single command starting with `by `."
            };
            format!(
                "You propose Isabelle/HOL proof commands.\n{}\nPropose between 3 and 8 candidates, one per line, most promising first.\n{}\nNo explanations, comments, numbering or code fences.",
                mode_line(mode),
                grammar
            )
        }
        ProposalMode::Outline => format!(
            "You write structured Isabelle/Isar proof outlines.\n{}\nStart with the lemma line, then a `proof` ... `qed` skeleton of `have`/`show` steps.\nLeave every step you cannot justify as `sorry`.\nNo explanations or code fences.",
            mode_line(mode)
        ),
        ProposalMode::Repair => format!(
            "You repair one block of an Isabelle/Isar proof.\n{}\nReturn only a replacement for the block under BLOCK:, keeping its statement.\nDo not repeat any block listed under BANNED:.\nNo explanations or code fences.",
            mode_line(mode)
        ),
    }
}

/// Section header followed by its content, or `(empty)`.
pub fn section(out: &mut String, header: &str, body: &str) {
    out.push_str(header);
    out.push('\n');
    if body.trim().is_empty() {
        out.push_str("(empty)\n");
    } else {
        out.push_str(body.trim_end());
        out.push('\n');
    }
}

pub fn hints_line(facts: &[String]) -> Option<String> {
    (!facts.is_empty()).then(|| format!("HINTS: Prefer using {}.", facts.join(", ")))
}

pub fn user_prompt(ctx: &ProposalContext) -> String {
    let mut out = String::new();
    section(&mut out, "GOAL:", &ctx.goal);
    section(&mut out, "STEPS:", &ctx.accepted_steps.join("\n"));
    section(&mut out, "STATE:", &ctx.state_hint);
    section(&mut out, "FACTS:", &ctx.helpful_facts.join("\n"));
    if let Some(h) = hints_line(&ctx.helpful_facts) {
        out.push_str(&h);
        out.push('\n');
    }
    out
}

pub fn build_prompt(ctx: &ProposalContext, mode: ProposalMode) -> (String, String) {
    (system_prompt(mode), user_prompt(ctx))
}

/// Body of a `HEADER:` section in a prompt built by [`section`].
pub fn prompt_section<'a>(prompt: &'a str, header: &str) -> Option<&'a str> {
    let start = prompt.find(&format!("{header}\n"))? + header.len() + 1;
    let rest = &prompt[start..];
    let end = rest
        .lines()
        .scan(0usize, |off, l| {
            let here = *off;
            *off += l.len() + 1;
            Some((here, l))
        })
        .find(|(_, l)| is_section_header(l))
        .map(|(off, _)| off)
        .unwrap_or(rest.len());
    let body = rest[..end].trim_end();
    (body != "(empty)").then_some(body)
}

fn is_section_header(line: &str) -> bool {
    let t = line.trim_end();
    t.len() > 1
        && t.ends_with(':')
        && !t.starts_with(' ')
        && t[..t.len() - 1].chars().all(|c| c.is_ascii_uppercase() || c == '_')
        || t.starts_with("HINTS:")
}

fn strip_list_marker(line: &str) -> &str {
    let t = line.trim();
    for bullet in ["- ", "* ", "• ", "+ "] {
        if let Some(rest) = t.strip_prefix(bullet) {
            return rest.trim_start();
        }
    }
    let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(r) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return r.trim_start();
        }
    }
    t
}

fn approved(line: &str, mode: ProposalMode) -> bool {
    match mode {
        ProposalMode::Step => line.starts_with("apply "),
        ProposalMode::Finish => line.starts_with("by ") || line == "done",
        _ => false,
    }
}

/// Keep only well-formed commands for `mode`, in order, without duplicates.
pub fn sanitize(raw: &str, mode: ProposalMode) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for line in raw.lines() {
        let t = line.trim();
        if t.starts_with("```") {
            continue;
        }
        let cmd = strip_list_marker(t).trim_matches('`').trim();
        if cmd.chars().count() > MAX_LINE_LEN || !approved(cmd, mode) {
            continue;
        }
        if seen.insert(cmd.to_string()) {
            out.push(cmd.to_string());
        }
    }
    out
}

const NOT_VARIABLES: &[&str] = &[
    "if", "then", "else", "let", "in", "of", "case", "rev", "map", "set", "nat", "int", "min", "max",
    "abs", "sum", "suc", "fst", "snd", "hd", "tl", "last", "id", "and", "or", "not", "mod", "div",
    "dvd", "zip", "foo", "bar", "all", "ex",
];

fn is_variable(tok: &str) -> bool {
    let mut chars = tok.chars();
    let Some(first) = chars.next() else { return false };
    first.is_ascii_lowercase()
        && tok.chars().count() <= 3
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '\'' || c == '_')
        && !NOT_VARIABLES.contains(&tok)
}

/// Short lower-case identifiers of the first subgoal (or the goal when the
/// state has none), in order of first appearance.
pub fn extract_variables(state_hint: &str, goal: &str) -> Vec<String> {
    let line = state_hint
        .lines()
        .find_map(|l| l.trim_start().strip_prefix("1. "))
        .unwrap_or(goal);
    let mut seen = HashSet::new();
    line.split(|c: char| !(c.is_alphanumeric() || c == '_' || c == '\''))
        .filter(|t| is_variable(t))
        .filter(|t| seen.insert(t.to_string()))
        .map(str::to_string)
        .collect()
}

pub fn heuristic_variants(state_hint: &str, goal: &str) -> Vec<String> {
    let mut out = Vec::new();
    for v in extract_variables(state_hint, goal) {
        out.push(format!("apply (induction {v})"));
        out.push(format!("apply (cases {v})"));
    }
    out.extend(["apply simp", "apply auto", "apply blast"].map(String::from));
    out
}

fn injected(ctx: &ProposalContext, mode: ProposalMode) -> Vec<String> {
    match mode {
        ProposalMode::Finish => ["by simp", "by auto", "by blast"].map(String::from).to_vec(),
        _ => {
            let mut v = heuristic_variants(&ctx.state_hint, &ctx.goal);
            v.extend(
                ctx.helpful_facts
                    .iter()
                    .take(MAX_RULE_TEMPLATES)
                    .map(|f| format!("apply (rule {f})")),
            );
            v
        }
    }
}

/// One backend call, sanitised, with heuristic candidates appended once the
/// search has stagnated, truncated to `k`.
pub fn propose(
    backend: &dyn ProposerBackend,
    ctx: &ProposalContext,
    mode: ProposalMode,
    k: usize,
) -> Result<Vec<String>, ProposerError> {
    let (system, user) = build_prompt(ctx, mode);
    let raw = backend.complete(&system, &user, temperature(mode, ctx.stagnation), k)?;
    let mut out = sanitize(&raw, mode);
    if ctx.stagnation >= INJECTION_THRESHOLD {
        for c in injected(ctx, mode) {
            if !out.contains(&c) {
                out.push(c);
            }
        }
    }
    out.truncate(k.max(1));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    struct Fixed(&'static str);

    impl ProposerBackend for Fixed {
        fn complete(&self, _: &str, _: &str, _: f64, _: usize) -> Result<String, ProposerError> {
            Ok(self.0.to_string())
        }
        fn name(&self) -> &str {
            "fixed"
        }
    }

    #[test]
    fn temperatures() {
        assert_eq!(step_temperature(0), 0.5);
        assert!((step_temperature(4) - 0.9).abs() < 1e-12);
        assert_eq!(step_temperature(100), 0.9);
        assert_eq!(finish_temperature(0), 0.2);
        assert!((finish_temperature(8) - 0.6).abs() < 1e-12);
        assert!((finish_temperature(3) - 0.35).abs() < 1e-12);
    }

    #[test]
    fn prompts() {
        let ctx = ProposalContext { goal: "rev (rev xs) = xs".into(), helpful_facts: vec!["rev_rev".into()], ..Default::default() };
        let (sys, user) = build_prompt(&ctx, ProposalMode::Step);
        assert!(sys.contains("apply") && sys.contains('3') && sys.contains('8'));
        assert!(user.contains("HINTS: Prefer using rev_rev."));
        assert!(user.contains("STATE:\n(empty)\n"));
        let order: Vec<usize> = ["GOAL:", "STEPS:", "STATE:", "FACTS:"].iter().map(|h| user.find(h).unwrap()).collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(prompt_section(&user, "GOAL:"), Some("rev (rev xs) = xs"));
        assert_eq!(prompt_section(&user, "STATE:"), None);
        assert_eq!(mode_of_prompt(&sys), Some(ProposalMode::Step));
        let (fin, _) = build_prompt(&ctx, ProposalMode::Finish);
        assert!(fin.contains("`by `") && fin.contains("done"));
    }

    #[test]
    fn sanitize_examples() {
        assert_eq!(sanitize("1. apply simp\n2. apply auto\napply simp", ProposalMode::Step), vec!["apply simp", "apply auto"]);
        assert_eq!(sanitize("Here is the proof:\nby auto", ProposalMode::Finish), vec!["by auto"]);
        assert_eq!(sanitize("```isabelle\ndone\n```", ProposalMode::Finish), vec!["done"]);
        assert!(sanitize(&format!("apply {}", "x".repeat(300)), ProposalMode::Step).is_empty());
        assert_eq!(sanitize("- apply blast\n* `apply force`", ProposalMode::Step), vec!["apply blast", "apply force"]);
    }

    #[test]
    fn variants() {
        let v = heuristic_variants("goal (1 subgoal):\n 1. length (xs @ ys) = n", "");
        assert_eq!(&v[..2], &["apply (induction xs)", "apply (cases xs)"]);
        assert!(v.iter().position(|c| c == "apply (induction ys)") < v.iter().position(|c| c == "apply (induction n)"));
        assert_eq!(heuristic_variants("", "True"), vec!["apply simp", "apply auto", "apply blast"]);
    }

    #[test]
    fn propose_behaviour() {
        let five = Fixed("apply a1\napply a2\napply a3\napply a4\napply a5");
        let ctx = ProposalContext::default();
        assert_eq!(propose(&five, &ctx, ProposalMode::Step, 8).unwrap().len(), 5);
        assert_eq!(propose(&five, &ctx, ProposalMode::Step, 2).unwrap(), vec!["apply a1", "apply a2"]);
        let ctx = ProposalContext { goal: "P xs".into(), stagnation: 3, ..Default::default() };
        assert_eq!(
            propose(&Fixed(""), &ctx, ProposalMode::Step, 100).unwrap(),
            heuristic_variants(&ctx.state_hint, &ctx.goal)
        );
    }

    proptest! {
        #[test]
        fn sanitize_idempotent(lines in proptest::collection::vec("[ -~]{0,40}", 0..12), finish in any::<bool>()) {
            let mode = if finish { ProposalMode::Finish } else { ProposalMode::Step };
            let mut raw = lines.join("\n");
            raw.push_str("\napply simp\nby auto\n2. apply x\ndone");
            let once = sanitize(&raw, mode);
            prop_assert_eq!(sanitize(&once.join("\n"), mode), once.clone());
            for c in &once {
                prop_assert!(approved(c, mode));
            }
        }

        #[test]
        fn temperature_monotone(s in 0u32..50) {
            prop_assert!(step_temperature(s + 1) >= step_temperature(s));
            prop_assert!(finish_temperature(s + 1) >= finish_temperature(s));
            prop_assert!(step_temperature(s) <= 0.9 && finish_temperature(s) <= 0.6);
        }
    }
}
