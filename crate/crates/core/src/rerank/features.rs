use crate::script_model::first_word;
use serde::{Deserialize, Serialize};

pub const DIM: usize = 32;

pub const TACTICS: [&str; 12] = [
    "simp", "auto", "blast", "fastforce", "force", "metis", "induction", "cases", "rule", "arith", "intro", "elim",
];

pub const SLOT_DEPTH: usize = 0;
pub const SLOT_SUBGOALS: usize = 1;
pub const SLOT_ELAPSED: usize = 2;
pub const SLOT_CACHE_HIT: usize = 3;
pub const SLOT_LISTY: usize = 4;
pub const SLOT_NATTY: usize = 5;
pub const SLOT_SETY: usize = 6;
pub const SLOT_QUANTIFIER: usize = 7;
pub const SLOT_BOOLEAN: usize = 8;
pub const SLOT_TACTIC: usize = 9;
pub const SLOT_PREMISES: usize = 21;

/// Search-side inputs to [`featurize`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureContext {
    pub depth: u32,
    /// Subgoals of the entry being expanded; `None` when unknown.
    pub subgoals: Option<u32>,
    pub elapsed_s: f64,
    pub cache_hit: bool,
    /// Goal statement plus the current state text.
    pub goal_text: String,
}

/// Method name of a command: `apply (simp add: x)` → `simp`.
pub fn method_token(candidate: &str) -> &str {
    let t = candidate.trim();
    let rest = t
        .strip_prefix("apply")
        .or_else(|| t.strip_prefix("by"))
        .unwrap_or(t)
        .trim_start()
        .trim_start_matches('(')
        .trim_start();
    first_word(rest)
}

pub fn tactic_slot(candidate: &str) -> Option<usize> {
    let m = match method_token(candidate) {
        "induct" => "induction",
        other => other,
    };
    TACTICS.iter().position(|t| *t == m)
}

fn has_token(text: &str, tok: &str) -> bool {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_')).any(|t| t == tok)
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn goal_flags(text: &str) -> [f64; 5] {
    let listy = text.contains("[]")
        || text.contains('#')
        || text.contains('@')
        || has_token(text, "list")
        || has_token(text, "Nil")
        || has_token(text, "Cons");
    let natty = has_token(text, "Suc")
        || has_token(text, "nat")
        || text.split(|c: char| !c.is_alphanumeric()).any(|t| !t.is_empty() && t.chars().all(|c| c.is_ascii_digit()));
    let sety = ['∈', '⊆', '∪', '∩'].iter().any(|c| text.contains(*c))
        || ["\\<in>", "\\<subseteq>", "\\<union>", "\\<inter>"].iter().any(|s| text.contains(s));
    let quant = text.contains('∀')
        || text.contains('∃')
        || ["\\<forall>", "\\<exists>"].iter().any(|s| text.contains(s))
        || has_token(text, "All")
        || has_token(text, "Ex");
    let boolean = ['∧', '∨', '¬', '⟶'].iter().any(|c| text.contains(*c))
        || ["\\<and>", "\\<or>", "\\<not>", "\\<longrightarrow>", "-->"].iter().any(|s| text.contains(s));
    [flag(listy), flag(natty), flag(sety), flag(quant), flag(boolean)]
}

/// Fixed 32-slot feature layout: search context, goal flags, tactic one-hot,
/// premise statistics, zero padding.
pub fn featurize(ctx: &FeatureContext, candidate: &str, premise_stats: [f64; 4]) -> [f64; DIM] {
    let mut x = [0.0; DIM];
    x[SLOT_DEPTH] = ctx.depth as f64;
    x[SLOT_SUBGOALS] = ctx.subgoals.map(f64::from).unwrap_or(0.0);
    x[SLOT_ELAPSED] = ctx.elapsed_s;
    x[SLOT_CACHE_HIT] = flag(ctx.cache_hit);
    x[SLOT_LISTY..SLOT_LISTY + 5].copy_from_slice(&goal_flags(&ctx.goal_text));
    if let Some(i) = tactic_slot(candidate) {
        x[SLOT_TACTIC + i] = 1.0;
    }
    x[SLOT_PREMISES..SLOT_PREMISES + 4].copy_from_slice(&premise_stats);
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let ctx = FeatureContext { depth: 2, subgoals: Some(3), ..Default::default() };
        let x = featurize(&ctx, "apply simp", [0.0; 4]);
        assert_eq!(x[0], 2.0);
        assert_eq!(x[1], 3.0);
        assert_eq!(x[SLOT_TACTIC], 1.0);
        assert_eq!(x[SLOT_TACTIC..SLOT_TACTIC + 12].iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn flags_from_goal() {
        let ctx = FeatureContext { goal_text: "∀x. x ∈ A".into(), ..Default::default() };
        let x = featurize(&ctx, "apply auto", [0.0; 4]);
        assert_eq!(x[SLOT_QUANTIFIER], 1.0);
        assert_eq!(x[SLOT_SETY], 1.0);
        assert_eq!(x[SLOT_LISTY], 0.0);
        let f = goal_flags("rev (x # xs) = rev xs @ [x]");
        assert_eq!(f[0], 1.0);
        assert_eq!(goal_flags("Suc n > 0")[1], 1.0);
        assert_eq!(goal_flags("A ∧ B ⟶ B")[4], 1.0);
    }

    #[test]
    fn unknown_method() {
        let x = featurize(&FeatureContext::default(), "apply mymagic", [0.0; 4]);
        assert!(x[SLOT_TACTIC..SLOT_TACTIC + 12].iter().all(|v| *v == 0.0));
        assert_eq!(tactic_slot("by (metis foo)"), Some(5));
        assert_eq!(tactic_slot("apply (induct xs)"), Some(6));
        assert_eq!(tactic_slot("done"), None);
    }

    #[test]
    fn premise_slots_and_padding() {
        let x = featurize(&FeatureContext::default(), "apply simp", [0.8, 0.6, 1.0, 2.0]);
        assert_eq!(&x[21..25], &[0.8, 0.6, 1.0, 2.0]);
        assert!(x[25..].iter().all(|v| *v == 0.0));
    }
}
