//! Premise retrieval: a recall-oriented select stage (TF-IDF cosine or token
//! Jaccard) and an optional rescoring stage.

use crate::datalog::AttemptRecord;
use crate::tokenize::{contains_word, tokens};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;
use thiserror::Error;

pub const DEFAULT_NEGATIVES: usize = 4;

#[derive(Debug, Error)]
pub enum PremiseError {
    #[error("premise index is empty")]
    EmptyIndex,
    #[error("premise index changed since it was finalized")]
    StaleIndex,
    #[error("duplicate premise id {0}")]
    DuplicateId(String),
    #[error("bad corpus line {line}: {message}")]
    BadCorpus { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PremiseEntry {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
}

impl PremiseEntry {
    pub fn new(id: &str, text: &str) -> Self {
        PremiseEntry { id: id.to_string(), text: text.to_string(), source: None, context: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectBackend {
    Tfidf,
    Overlap,
}

#[derive(Debug, Clone, Default)]
pub struct PremiseIndex {
    entries: Vec<PremiseEntry>,
    finalized: bool,
    idf: HashMap<String, f64>,
    vectors: Vec<BTreeMap<String, f64>>,
    token_sets: Vec<BTreeSet<String>>,
}

pub fn smooth_idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

fn l2_normalize(v: &mut BTreeMap<String, f64>) {
    let norm = v.values().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.values_mut() {
            *x /= norm;
        }
    }
}

pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count() as f64;
    let union = a.union(b).count() as f64;
    inter / union
}

/// Descending by score, then id ascending. Scores equal to 1e-12 tie.
fn rank(scored: &mut [(String, f64)]) {
    let key = |s: f64| (s * 1e12).round();
    scored.sort_by(|a, b| key(b.1).partial_cmp(&key(a.1)).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0)));
}

impl PremiseIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<PremiseEntry>) -> Result<Self, PremiseError> {
        let mut idx = Self::new();
        for e in entries {
            idx.add(e)?;
        }
        idx.finalize()?;
        Ok(idx)
    }

    pub fn add(&mut self, entry: PremiseEntry) -> Result<(), PremiseError> {
        if self.entries.iter().any(|e| e.id == entry.id) {
            return Err(PremiseError::DuplicateId(entry.id));
        }
        self.entries.push(entry);
        self.finalized = false;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[PremiseEntry] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&PremiseEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    pub fn finalize(&mut self) -> Result<(), PremiseError> {
        if self.entries.is_empty() {
            return Err(PremiseError::EmptyIndex);
        }
        let docs: Vec<Vec<String>> = self.entries.iter().map(|e| tokens(&e.text)).collect();
        let mut df: HashMap<String, usize> = HashMap::new();
        for d in &docs {
            for t in d.iter().collect::<HashSet<_>>() {
                *df.entry(t.clone()).or_default() += 1;
            }
        }
        let n = docs.len();
        self.idf = df.iter().map(|(t, c)| (t.clone(), smooth_idf(n, *c))).collect();
        self.vectors = docs.iter().map(|d| self.tfidf(d)).collect();
        self.token_sets = docs.into_iter().map(|d| d.into_iter().collect()).collect();
        self.finalized = true;
        Ok(())
    }

    fn idf_of(&self, t: &str) -> f64 {
        self.idf.get(t).copied().unwrap_or_else(|| smooth_idf(self.entries.len(), 0))
    }

    fn tfidf(&self, toks: &[String]) -> BTreeMap<String, f64> {
        let mut v: BTreeMap<String, f64> = BTreeMap::new();
        for t in toks {
            *v.entry(t.clone()).or_default() += 1.0;
        }
        for (t, x) in v.iter_mut() {
            *x *= self.idf_of(t);
        }
        l2_normalize(&mut v);
        v
    }

    pub fn select(&self, goal: &str, k_select: usize, backend: SelectBackend) -> Result<Vec<(String, f64)>, PremiseError> {
        if !self.finalized {
            return Err(PremiseError::StaleIndex);
        }
        let toks = tokens(goal);
        let mut scored: Vec<(String, f64)> = match backend {
            SelectBackend::Tfidf => {
                let q = self.tfidf(&toks);
                self.entries
                    .iter()
                    .zip(&self.vectors)
                    .map(|(e, v)| {
                        let dot: f64 = q.iter().filter_map(|(t, w)| v.get(t).map(|x| x * w)).sum();
                        (e.id.clone(), dot.clamp(0.0, 1.0))
                    })
                    .collect()
            }
            SelectBackend::Overlap => {
                let q: BTreeSet<String> = toks.into_iter().collect();
                self.entries.iter().zip(&self.token_sets).map(|(e, s)| (e.id.clone(), jaccard(&q, s))).collect()
            }
        };
        rank(&mut scored);
        scored.truncate(k_select);
        Ok(scored)
    }
}

/// Rescoring function for `(goal, premise id)` pairs.
pub trait PairScorer {
    fn score(&self, goal: &str, premise_id: &str) -> f64;
}

impl<F: Fn(&str, &str) -> f64> PairScorer for F {
    fn score(&self, goal: &str, premise_id: &str) -> f64 {
        self(goal, premise_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub id: String,
    pub select_score: f64,
    pub rerank_score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub ranked: Vec<Ranked>,
    pub k_select: usize,
    pub k_rerank: usize,
}

impl RetrievalResult {
    pub fn ids(&self) -> Vec<String> {
        self.ranked.iter().map(|r| r.id.clone()).collect()
    }
}

/// Rescore the first `k_rerank` pool entries; without a scorer the select
/// score is reused and the order is unchanged.
pub fn rerank(goal: &str, pool: &[(String, f64)], k_rerank: usize, scorer: Option<&dyn PairScorer>) -> RetrievalResult {
    let head = k_rerank.min(pool.len());
    let mut ranked: Vec<Ranked> = pool
        .iter()
        .enumerate()
        .map(|(i, (id, s))| Ranked {
            id: id.clone(),
            select_score: *s,
            rerank_score: match scorer {
                Some(sc) if i < head => sc.score(goal, id),
                _ => *s,
            },
        })
        .collect();
    if scorer.is_some() {
        ranked[..head].sort_by(|a, b| b.rerank_score.partial_cmp(&a.rerank_score).unwrap_or(Ordering::Equal));
    }
    RetrievalResult { ranked, k_select: pool.len(), k_rerank }
}

/// `(top select score, mean select score, retrieved ids named in the
/// candidate, retrieved count)`.
pub fn premise_stats(retrieved: &RetrievalResult, candidate: &str) -> [f64; 4] {
    if retrieved.ranked.is_empty() {
        return [0.0; 4];
    }
    let scores: Vec<f64> = retrieved.ranked.iter().map(|r| r.select_score).collect();
    let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let overlap = retrieved.ranked.iter().filter(|r| contains_word(candidate, &r.id)).count();
    [top, mean, overlap as f64, scores.len() as f64]
}

/// Text to query the index with: the goal plus the first subgoal line.
pub fn retrieval_query(goal: &str, state_hint: &str) -> String {
    match state_hint.lines().find_map(|l| l.trim_start().strip_prefix("1. ")) {
        Some(sub) => format!("{goal} {sub}"),
        None => goal.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub goal: String,
    pub pos: String,
    pub negs: Vec<String>,
}

/// Contrastive pairs from successful attempts: pool ids named in the
/// command are positives; negatives are sampled from the rest of the pool.
pub fn extract_training_pairs(attempts: &[AttemptRecord], n_neg: usize, seed: u64) -> Vec<TrainingPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for a in attempts.iter().filter(|a| a.success) {
        let positives: Vec<&String> = a.retrieval_pool.iter().filter(|id| contains_word(&a.action, id)).collect();
        let rest: Vec<&String> = a.retrieval_pool.iter().filter(|id| !positives.contains(id)).collect();
        for pos in &positives {
            let negs = rest.choose_multiple(&mut rng, n_neg.min(rest.len())).map(|s| s.to_string()).collect();
            out.push(TrainingPair { goal: a.goal.clone(), pos: pos.to_string(), negs });
        }
    }
    out
}

/// JSONL corpus, one `{id, text, source?}` per line.
pub fn load_corpus(path: &Path) -> Result<Vec<PremiseEntry>, PremiseError> {
    let reader = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| PremiseError::BadCorpus { line: i + 1, message: e.to_string() })?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datalog::AttemptType;

    fn index(texts: &[(&str, &str)]) -> PremiseIndex {
        PremiseIndex::from_entries(texts.iter().map(|(i, t)| PremiseEntry::new(i, t)).collect()).unwrap()
    }

    #[test]
    fn disjoint_docs_have_zero_similarity() {
        let idx = index(&[("a", "alpha beta"), ("b", "gamma delta")]);
        let r = idx.select("alpha beta", 2, SelectBackend::Tfidf).unwrap();
        assert_eq!(r[0].0, "a");
        assert!((r[0].1 - 1.0).abs() < 1e-9);
        assert_eq!(r[1].1, 0.0);
    }

    #[test]
    fn idf_smoothing() {
        assert!((smooth_idf(3, 3) - 1.0).abs() < 1e-12);
        assert!(smooth_idf(3, 1) > smooth_idf(3, 3));
    }

    #[test]
    fn stale_and_empty() {
        let mut idx = index(&[("a", "rev rev")]);
        idx.add(PremiseEntry::new("b", "map")).unwrap();
        assert!(matches!(idx.select("rev", 1, SelectBackend::Tfidf), Err(PremiseError::StaleIndex)));
        idx.finalize().unwrap();
        assert!(idx.select("rev", 1, SelectBackend::Tfidf).is_ok());
        assert!(matches!(PremiseIndex::new().finalize(), Err(PremiseError::EmptyIndex)));
        assert!(matches!(idx.add(PremiseEntry::new("a", "x")), Err(PremiseError::DuplicateId(_))));
    }

    #[test]
    fn jaccard_example() {
        let a: BTreeSet<&str> = ["a", "b"].into();
        let b: BTreeSet<&str> = ["b", "c"].into();
        assert!((jaccard(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn select_truncates_and_breaks_ties_by_id() {
        let idx = index(&[("e", "xx yy"), ("d", "xx yy"), ("c", "zz"), ("b", "xx"), ("a", "ww")]);
        let r = idx.select("xx yy", 3, SelectBackend::Tfidf).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r[0].0, "d");
        assert_eq!(r[1].0, "e");
        assert_eq!(r[2].0, "b");
    }

    #[test]
    fn rerank_contract() {
        let pool = vec![("p1".to_string(), 0.9), ("p2".to_string(), 0.8), ("p3".to_string(), 0.1)];
        let r = rerank("g", &pool, 2, None);
        assert_eq!(r.ids(), vec!["p1", "p2", "p3"]);
        assert_eq!(r.ranked[0].rerank_score, 0.9);
        let flip = |_: &str, id: &str| if id == "p2" { 1.0 } else { 0.0 };
        let r = rerank("g", &pool, 2, Some(&flip));
        assert_eq!(r.ids(), vec!["p2", "p1", "p3"]);
        let r = rerank("g", &pool, 0, Some(&flip));
        assert_eq!(r.ids(), vec!["p1", "p2", "p3"]);
    }

    #[test]
    fn stats() {
        assert_eq!(premise_stats(&RetrievalResult::default(), "by simp"), [0.0; 4]);
        let pool = vec![("rev_rev".to_string(), 0.8), ("app_nil".to_string(), 0.4)];
        let r = rerank("g", &pool, 0, None);
        let s = premise_stats(&r, "by (simp add: rev_rev)");
        assert!((s[0] - 0.8).abs() < 1e-12);
        assert!((s[1] - 0.6).abs() < 1e-12);
        assert_eq!(s[2], 1.0);
        assert_eq!(s[3], 2.0);
    }

    fn success(action: &str, pool: &[&str], ok: bool) -> AttemptRecord {
        let mut a = AttemptRecord::new("r", AttemptType::Step, "G");
        a.action = action.into();
        a.success = ok;
        a.retrieval_pool = pool.iter().map(|s| s.to_string()).collect();
        a
    }

    #[test]
    fn training_pairs() {
        let a = success("by (metis L1 L2)", &["L1", "L2", "L3", "L4"], true);
        let pairs = extract_training_pairs(std::slice::from_ref(&a), 4, 7);
        assert_eq!(pairs.iter().map(|p| p.pos.as_str()).collect::<Vec<_>>(), vec!["L1", "L2"]);
        for p in &pairs {
            assert!(p.negs.iter().all(|n| n == "L3" || n == "L4"));
        }
        assert!(extract_training_pairs(&[success("by (metis L1)", &["L1", "L2"], false)], 4, 7).is_empty());
        assert_eq!(pairs, extract_training_pairs(&[a], 4, 7));
    }
}
