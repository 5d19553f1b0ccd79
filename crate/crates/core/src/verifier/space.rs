//! Synthetic proof spaces: a transition table over abstract proof states that
//! stands in for a live prover.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("invalid fixture: {0}")]
    Invalid(String),
    #[error("fixture parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("fixture io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub subgoals: u32,
    /// Statement of the first subgoal, printed as ` 1. <goal>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<String>,
    /// Fact names printed under a `facts:` heading.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub facts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub cmd: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpace {
    pub root: String,
    pub nodes: BTreeMap<String, NodeSpec>,
    pub edges: Vec<Edge>,
    #[serde(default)]
    pub refutable: BTreeMap<String, Vec<(String, String)>>,
    /// Statement text -> state id, for lemma goals and `have`/`show`
    /// statements other than the root goal.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub goals: BTreeMap<String, String>,
    /// Commands whose check never finishes (reported as a timeout).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub timeouts: Vec<String>,
}

impl SyntheticSpace {
    pub fn from_json(text: &str) -> Result<Self, FixtureError> {
        let space: SyntheticSpace = serde_json::from_str(text)?;
        space.validate()?;
        Ok(space)
    }

    pub fn load(path: &Path) -> Result<Self, FixtureError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("space serializes")
    }

    pub fn validate(&self) -> Result<(), FixtureError> {
        let bad = |m: String| Err(FixtureError::Invalid(m));
        if !self.nodes.contains_key(&self.root) {
            return bad(format!("root {} is not a node", self.root));
        }
        let mut seen = HashMap::new();
        for e in &self.edges {
            for id in [&e.from, &e.to] {
                if !self.nodes.contains_key(id) {
                    return bad(format!("edge references unknown node {id}"));
                }
            }
            if e.cmd.trim().is_empty() {
                return bad(format!("empty command on edge from {}", e.from));
            }
            if let Some(prev) = seen.insert((e.from.as_str(), e.cmd.trim()), e.to.as_str()) {
                if prev != e.to {
                    return bad(format!("ambiguous edge {} --{}-->", e.from, e.cmd));
                }
            }
        }
        for (goal, bindings) in &self.refutable {
            if bindings.is_empty() {
                return bad(format!("refutable goal {goal} has no bindings"));
            }
        }
        for (text, id) in &self.goals {
            if !self.nodes.contains_key(id) {
                return bad(format!("goal {text} maps to unknown node {id}"));
            }
        }
        Ok(())
    }

    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.nodes.get(id)
    }

    pub fn step(&self, from: &str, cmd: &str) -> Option<&str> {
        let cmd = cmd.trim();
        self.edges
            .iter()
            .find(|e| e.from == from && e.cmd.trim() == cmd)
            .map(|e| e.to.as_str())
    }

    pub fn outgoing<'a>(&'a self, from: &'a str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges.iter().filter(move |e| e.from == from)
    }

    pub fn is_terminal(&self, id: &str) -> bool {
        self.nodes.get(id).is_some_and(|n| n.subgoals == 0)
    }

    /// State for a statement: explicit goal map, then nodes whose goal text
    /// matches.
    pub fn resolve_goal(&self, text: &str) -> Option<&str> {
        let key = normalize_stmt(text);
        if let Some(id) = self.goals.iter().find(|(g, _)| normalize_stmt(g) == key).map(|(_, id)| id) {
            return Some(id);
        }
        if self.nodes[&self.root].goal.as_deref().map(normalize_stmt) == Some(key.clone()) {
            return Some(&self.root);
        }
        self.nodes
            .iter()
            .find(|(_, n)| n.goal.as_deref().map(normalize_stmt) == Some(key.clone()))
            .map(|(id, _)| id.as_str())
    }

    /// Goal text of the root, or a placeholder when the fixture has none.
    pub fn root_goal(&self) -> String {
        self.nodes[&self.root].goal.clone().unwrap_or_else(|| format!("goal_{}", self.root))
    }
}

pub fn normalize_stmt(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

const APPLY_POOL: &[&str] = &[
    "apply simp",
    "apply auto",
    "apply blast",
    "apply (induction xs)",
    "apply (cases n)",
    "apply (rule conjI)",
    "apply (intro allI)",
    "apply arith",
    "apply (simp add: algebra_simps)",
    "apply (auto simp: field_simps)",
    "apply fastforce",
    "apply (erule disjE)",
    "apply (rule impI)",
    "apply force",
    "apply (induction n)",
    "apply (cases xs)",
];

const FINISH_POOL: &[&str] = &[
    "by simp",
    "by auto",
    "by blast",
    "by (metis append_Nil2)",
    "by arith",
    "by fastforce",
    "by (simp add: rev_rev_ident)",
    "by force",
];

/// Generate a random space with at most `num_solutions` disjoint solution
/// paths of length `<= depth`. Along a solution path the subgoal count is
/// the number of remaining steps; dead-end states carry strictly larger
/// counts than any solution state.
pub fn generate_space(depth: usize, branching: usize, num_solutions: usize, seed: u64) -> SyntheticSpace {
    assert!(depth >= 1 && branching >= 1, "depth and branching must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = BTreeMap::new();
    let mut edges = Vec::new();
    let mut next_id = 0usize;
    // goal texts embed the node id so every statement resolves to one node
    let mut fresh = |nodes: &mut BTreeMap<String, NodeSpec>, subgoals: u32, tag: Option<&str>| {
        let id = format!("n{next_id}");
        next_id += 1;
        let goal = tag.map(|t| format!("{t} {id}"));
        nodes.insert(id.clone(), NodeSpec { subgoals, goal, facts: vec![] });
        id
    };

    let paths = num_solutions.min(branching);
    let lengths: Vec<usize> = (0..paths).map(|_| rng.random_range(1..=depth)).collect();
    let dead_base = (depth + 2) as u32;
    let root_n = lengths.iter().copied().max().map(|m| m as u32).unwrap_or(dead_base);
    let root = fresh(&mut nodes, root_n, Some("P"));

    // (node, depth, remaining steps if on a path)
    let mut frontier: Vec<(String, usize, Option<usize>)> = Vec::new();
    let mut root_children: Vec<Option<usize>> = lengths.iter().map(|&l| Some(l)).collect();
    root_children.resize(branching, None);
    frontier.push((root.clone(), 0, None));

    let mut dead_by_depth: HashMap<usize, Vec<String>> = HashMap::new();
    let mut first = true;
    while let Some((node, d, remaining)) = frontier.pop() {
        let children: Vec<Option<usize>> = if first {
            first = false;
            root_children.clone()
        } else {
            match remaining {
                Some(r) => {
                    let mut v = vec![Some(r)];
                    v.resize(branching, None);
                    v
                }
                None => vec![None; branching],
            }
        };
        if d >= depth {
            continue;
        }
        let mut apply_cmds: Vec<&str> = APPLY_POOL.to_vec();
        apply_cmds.shuffle(&mut rng);
        let mut finish_cmds: Vec<&str> = FINISH_POOL.to_vec();
        finish_cmds.shuffle(&mut rng);
        for (slot, child) in children.into_iter().enumerate() {
            let extra = format!("apply (rule step_{slot})");
            match child {
                Some(1) => {
                    let cmd = finish_cmds.pop().map(str::to_string).unwrap_or_else(|| format!("by (rule step_{slot})"));
                    let t = fresh(&mut nodes, 0, None);
                    edges.push(Edge { from: node.clone(), cmd, to: t });
                }
                Some(r) => {
                    let cmd = apply_cmds.pop().map(str::to_string).unwrap_or(extra);
                    let c = fresh(&mut nodes, (r - 1) as u32, Some("Q"));
                    edges.push(Edge { from: node.clone(), cmd, to: c.clone() });
                    frontier.push((c, d + 1, Some(r - 1)));
                }
                None => {
                    if rng.random_bool(0.2) && d + 1 < depth {
                        // occasionally no edge at all in this slot
                        continue;
                    }
                    let cmd = apply_cmds.pop().map(str::to_string).unwrap_or(extra);
                    let pool = dead_by_depth.entry(d + 1).or_default();
                    let target = if !pool.is_empty() && rng.random_bool(0.3) {
                        pool[rng.random_range(0..pool.len())].clone()
                    } else {
                        let c = fresh(&mut nodes, dead_base + (d as u32) + 1, Some("R"));
                        pool.push(c.clone());
                        frontier.push((c.clone(), d + 1, None));
                        c
                    };
                    edges.push(Edge { from: node.clone(), cmd, to: target });
                }
            }
        }
    }
    edges.sort_by(|a, b| (node_num(&a.from), &a.cmd).cmp(&(node_num(&b.from), &b.cmd)));
    SyntheticSpace {
        root,
        nodes,
        edges,
        refutable: BTreeMap::new(),
        goals: BTreeMap::new(),
        timeouts: vec![],
    }
}

fn node_num(id: &str) -> usize {
    id.trim_start_matches('n').parse().unwrap_or(usize::MAX)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Count root-to-terminal paths by exhaustive DFS (the table is acyclic).
    fn count_paths(space: &SyntheticSpace, from: &str, budget: usize) -> usize {
        if space.is_terminal(from) {
            return 1;
        }
        if budget == 0 {
            return 0;
        }
        space.outgoing(from).map(|e| count_paths(space, &e.to, budget - 1)).sum()
    }

    #[test]
    fn no_solutions_means_no_terminal() {
        let s = generate_space(4, 3, 0, 11);
        assert_eq!(count_paths(&s, &s.root, 10), 0);
        assert!(s.nodes.values().all(|n| n.subgoals > 0));
    }

    #[test]
    fn deterministic_in_seed() {
        assert_eq!(generate_space(3, 2, 1, 7), generate_space(3, 2, 1, 7));
        assert_ne!(generate_space(3, 2, 1, 7), generate_space(3, 2, 1, 8));
    }

    #[test]
    fn seed7_has_exactly_one_path() {
        let s = generate_space(3, 2, 1, 7);
        s.validate().unwrap();
        assert_eq!(count_paths(&s, &s.root, 3), 1);
    }

    #[test]
    fn path_counts_bounded_and_decreasing() {
        for seed in 0..50 {
            let (d, b, m) = (1 + seed as usize % 5, 1 + seed as usize % 3, seed as usize % 4);
            let s = generate_space(d, b, m, seed);
            s.validate().unwrap();
            let paths = count_paths(&s, &s.root, d);
            assert!(paths <= m, "seed {seed}: {paths} > {m}");
            // subgoal counts weakly decrease along every solution path
            fn check(s: &SyntheticSpace, id: &str) -> bool {
                if s.is_terminal(id) {
                    return true;
                }
                s.outgoing(id).all(|e| {
                    let reaches = reach_terminal(s, &e.to);
                    !reaches || (s.nodes[&e.to].subgoals <= s.nodes[id].subgoals && check(s, &e.to))
                })
            }
            fn reach_terminal(s: &SyntheticSpace, id: &str) -> bool {
                s.is_terminal(id) || s.outgoing(id).any(|e| reach_terminal(s, &e.to))
            }
            assert!(check(&s, &s.root));
        }
    }

    #[test]
    fn json_round_trip_and_validation() {
        let s = generate_space(3, 3, 2, 5);
        assert_eq!(SyntheticSpace::from_json(&s.to_json()).unwrap(), s);
        let broken = r#"{"root":"a","nodes":{"a":{"subgoals":1}},"edges":[{"from":"a","cmd":"apply simp","to":"zz"}]}"#;
        assert!(matches!(SyntheticSpace::from_json(broken), Err(FixtureError::Invalid(_))));
        let no_root = r#"{"root":"q","nodes":{},"edges":[]}"#;
        assert!(SyntheticSpace::from_json(no_root).is_err());
    }
}
