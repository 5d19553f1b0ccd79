//! Lightweight symbolic hints for outline generation: facts from the proof
//! state plus a mined token→lemma lexicon.

use crate::script_model::{lemma_line, ProofScript};
use crate::tokenize::{contains_word, tokens};
use crate::verifier::{check_uncached, CheckMode, VerifierBackend};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::time::Duration;
use thiserror::Error;

pub const TRIVIAL_FACTS: &[&str] = &["refl", "sym", "trans", "TrueI", "conjI"];
pub const DEFAULT_K_CTX: usize = 8;
pub const DEFAULT_K_LEX: usize = 8;
pub const DEFAULT_K_HINT: usize = 12;

const FACT_HEADINGS: &[&str] = &["this:", "assms:", "facts:"];

#[derive(Debug, Error)]
pub enum HintError {
    #[error("invalid lexicon: {0}")]
    LexiconInvalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HintSource {
    Ctx,
    Lex,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HintSet {
    pub items: Vec<(String, HintSource)>,
}

impl HintSet {
    pub fn ids(&self) -> Vec<String> {
        self.items.iter().map(|(id, _)| id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Fact names listed under the state's fact headings, unqualified,
/// deduplicated, without trivial facts, at most `k_ctx`.
pub fn context_hints_from_state(state_hint: &str, k_ctx: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut in_block = false;
    for line in state_hint.lines() {
        let t = line.trim();
        if FACT_HEADINGS.contains(&t) {
            in_block = true;
            continue;
        }
        let indented = line.starts_with(' ') || line.starts_with('\t');
        if !indented || t.is_empty() {
            in_block = false;
            continue;
        }
        if !in_block {
            continue;
        }
        let name = t.split_whitespace().next().unwrap_or("").trim_end_matches(':');
        let name = name.rsplit('.').next().unwrap_or(name);
        if name.is_empty() || TRIVIAL_FACTS.contains(&name) || out.iter().any(|h| h == name) {
            continue;
        }
        out.push(name.to_string());
    }
    out.truncate(k_ctx);
    out
}

/// Open `goal` in a scratch theory, print its state and read the facts.
/// Checker failures yield no hints.
pub fn context_hints(backend: &dyn VerifierBackend, goal: &str, k_ctx: usize, timeout: Duration) -> Vec<String> {
    if k_ctx == 0 {
        return vec![];
    }
    match check_uncached(backend, &[lemma_line(goal)], "", CheckMode::Step, timeout) {
        Ok(r) => context_hints_from_state(&r.state_hint, k_ctx),
        Err(e) => {
            log::warn!("context hints unavailable: {e}");
            vec![]
        }
    }
}

/// Token → weighted lemmas.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HintLexicon {
    pub map: BTreeMap<String, Vec<(String, f64)>>,
}

impl HintLexicon {
    pub fn from_json(text: &str) -> Result<Self, HintError> {
        let lex: HintLexicon = serde_json::from_str(text).map_err(|e| HintError::LexiconInvalid(e.to_string()))?;
        lex.validate()?;
        Ok(lex)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("lexicon serializes")
    }

    fn validate(&self) -> Result<(), HintError> {
        for (tok, lemmas) in &self.map {
            let mut seen = BTreeSet::new();
            for (id, w) in lemmas {
                if !w.is_finite() || *w < 0.0 {
                    return Err(HintError::LexiconInvalid(format!("weight {w} for {id} under {tok}")));
                }
                if !seen.insert(id) {
                    return Err(HintError::LexiconInvalid(format!("{id} listed twice under {tok}")));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

pub fn load_lexicon(path: &Path) -> Result<HintLexicon, HintError> {
    HintLexicon::from_json(&std::fs::read_to_string(path)?)
}

/// Co-occurrence counts: each distinct goal token adds 1 to every lemma
/// used in that goal's proof.
pub fn mine_lexicon(corpus: &[(String, Vec<String>)]) -> HintLexicon {
    let mut acc: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for (goal, lemmas) in corpus {
        let toks: BTreeSet<String> = tokens(goal).into_iter().collect();
        let lemmas: BTreeSet<&String> = lemmas.iter().collect();
        for t in &toks {
            let slot = acc.entry(t.clone()).or_default();
            for l in &lemmas {
                *slot.entry((*l).clone()).or_default() += 1.0;
            }
        }
    }
    HintLexicon {
        map: acc.into_iter().map(|(t, m)| (t, m.into_iter().collect())).collect(),
    }
}

/// Per-lemma weight sums over the goal's tokens (with multiplicity), best
/// first, ties by id.
pub fn lexicon_scores(lexicon: &HintLexicon, goal: &str) -> Vec<(String, f64)> {
    let mut scores: HashMap<&str, f64> = HashMap::new();
    for t in tokens(goal) {
        if let Some(lemmas) = lexicon.map.get(&t) {
            for (id, w) in lemmas {
                *scores.entry(id.as_str()).or_default() += w;
            }
        }
    }
    let mut v: Vec<(String, f64)> = scores.into_iter().map(|(k, s)| (k.to_string(), s)).collect();
    v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then_with(|| a.0.cmp(&b.0)));
    v
}

pub fn lexicon_hints(lexicon: &HintLexicon, goal: &str, k_lex: usize) -> Vec<String> {
    lexicon_scores(lexicon, goal).into_iter().take(k_lex).map(|(id, _)| id).collect()
}

/// Context hints first, then new lexicon hints, capped at `k_hint`.
pub fn combine_hints(ctx: &[String], lex: &[String], k_hint: usize) -> HintSet {
    let mut items: Vec<(String, HintSource)> = Vec::new();
    let tagged = ctx.iter().map(|h| (h, HintSource::Ctx)).chain(lex.iter().map(|h| (h, HintSource::Lex)));
    for (h, src) in tagged {
        if items.len() == k_hint {
            break;
        }
        if !items.iter().any(|(x, _)| x == h) {
            items.push((h.clone(), src));
        }
    }
    HintSet { items }
}

/// Distinct hints used in the skeleton text, capped at `k_hint`.
pub fn hint_bonus(skeleton: &ProofScript, hints: &HintSet, k_hint: usize) -> usize {
    let text = skeleton.render();
    hints.items.iter().filter(|(id, _)| contains_word(&text, id)).count().min(k_hint)
}
