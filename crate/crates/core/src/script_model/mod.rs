//! Proof scripts as line sequences: parsing, hole discovery, stable hole ids,
//! textual block structure and the rewriting operators used by the planner.

pub mod lexer;
mod outline;

use crate::fingerprint::{sha1_hex, Fingerprint};
use serde::{Deserialize, Serialize};
use std::ops::Range;
use thiserror::Error;

pub use outline::{normalize_outline, strip_to_type};

/// Character window on each side of a hole used by [`hole_id`].
pub const HID_WINDOW: usize = 120;

const DECL_KEYWORDS: &[&str] = &["lemma", "theorem", "corollary", "proposition", "schematic_goal"];
const STATEMENT_KEYWORDS: &[&str] = &["have", "show", "obtain", "hence", "thus"];
const STATEMENT_PREFIXES: &[&str] = &["then", "from", "with", "moreover", "ultimately", "also", "finally"];
const TERMINAL_KEYWORDS: &[&str] = &["by", "sorry", "done", "oops", ".", ".."];
const INLINE_JUSTIFICATIONS: &[&str] = &["by", "sorry", "proof", "apply", "done", "oops", "using", "unfolding"];

pub(crate) const ISAR_KEYWORDS: &[&str] = &[
    "lemma", "theorem", "corollary", "proposition", "proof", "qed", "have", "show", "obtain",
    "hence", "thus", "then", "from", "with", "using", "unfolding", "apply", "by", "done", "sorry",
    "oops", "case", "next", "fix", "assume", "let", "note", "moreover", "ultimately", "also",
    "finally", "define", "consider", "presume", "print_state", ".", "..",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScriptError {
    #[error("script is empty")]
    Empty,
    #[error("no quoted goal in the declaration line")]
    NoGoalHeader,
    #[error("span {start}..{end} overlaps the lemma header")]
    HeaderOverlap { start: usize, end: usize },
    #[error("span {start}..{end} out of bounds for {len} lines")]
    OutOfBounds { start: usize, end: usize, len: usize },
    #[error("nothing left after stripping to {0:?}")]
    EmptyAfterStrip(BlockKind),
    #[error("no proof body could be recovered from the outline")]
    Unsalvageable,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProofScript {
    lines: Vec<String>,
    goal: String,
    header: usize,
}

impl ProofScript {
    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        if text.trim().is_empty() {
            return Err(ScriptError::Empty);
        }
        let lines: Vec<String> = text.split('\n').map(str::to_string).collect();
        Self::from_lines(lines)
    }

    pub fn from_lines(lines: Vec<String>) -> Result<Self, ScriptError> {
        let header = lines
            .iter()
            .position(|l| !l.trim().is_empty())
            .ok_or(ScriptError::Empty)?;
        let goal = extract_goal(&lines[header]).ok_or(ScriptError::NoGoalHeader)?;
        Ok(ProofScript { lines, goal, header })
    }

    /// The bare declaration `lemma "<goal>"`.
    pub fn lemma(goal: &str) -> Self {
        ProofScript {
            lines: vec![lemma_line(goal)],
            goal: goal.to_string(),
            header: 0,
        }
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn goal(&self) -> &str {
        &self.goal
    }

    pub fn header_index(&self) -> usize {
        self.header
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn render(&self) -> String {
        self.lines.join("\n")
    }

    /// Append a command line (indented by two spaces).
    pub fn push_command(&self, cmd: &str) -> ProofScript {
        let mut next = self.clone();
        next.lines.push(format!("  {}", cmd.trim()));
        next
    }

    /// Trimmed non-blank lines after the header.
    pub fn commands(&self) -> Vec<&str> {
        self.lines[self.header + 1..]
            .iter()
            .map(|l| l.trim())
            .filter(|l| !l.is_empty())
            .collect()
    }

    /// Number of non-blank lines; the |S| used by beam ordering.
    pub fn command_len(&self) -> usize {
        self.lines.iter().filter(|l| !l.trim().is_empty()).count()
    }

    pub fn fingerprint(&self) -> Fingerprint {
        crate::fingerprint::state_fingerprint(&self.render())
    }

    pub fn has_holes(&self) -> bool {
        !find_holes(self).is_empty()
    }
}

pub fn parse_script(text: &str) -> Result<ProofScript, ScriptError> {
    ProofScript::parse(text)
}

pub fn lemma_line(goal: &str) -> String {
    format!("lemma \"{}\"", goal)
}

fn extract_goal(line: &str) -> Option<String> {
    let first = first_word(line);
    if !DECL_KEYWORDS.contains(&first) {
        return None;
    }
    quoted_text(line)
}

/// Text of the first `"..."` or `‹...›` literal on the line.
pub(crate) fn quoted_text(line: &str) -> Option<String> {
    let chars: Vec<char> = line.chars().collect();
    let start = chars.iter().position(|&c| c == '"' || c == '‹')?;
    if chars[start] == '"' {
        let mut out = String::new();
        let mut i = start + 1;
        while i < chars.len() {
            match chars[i] {
                '\\' if i + 1 < chars.len() => {
                    out.push(chars[i]);
                    out.push(chars[i + 1]);
                    i += 2;
                    continue;
                }
                '"' => return Some(out),
                c => out.push(c),
            }
            i += 1;
        }
        None
    } else {
        let mut depth = 0;
        let mut out = String::new();
        for &c in &chars[start..] {
            match c {
                '‹' => {
                    if depth > 0 {
                        out.push(c);
                    }
                    depth += 1;
                }
                '›' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(out);
                    }
                    out.push(c);
                }
                c => out.push(c),
            }
        }
        None
    }
}

/// Leading keyword of a line: up to whitespace or `(`.
pub fn first_word(line: &str) -> &str {
    let t = line.trim_start();
    let end = t
        .find(|c: char| c.is_whitespace() || c == '(' || c == '"' || c == '‹')
        .unwrap_or(t.len());
    &t[..end]
}

pub fn indent_of(line: &str) -> usize {
    line.len() - line.trim_start().len()
}

fn indent_str(line: &str) -> &str {
    &line[..indent_of(line)]
}

fn is_blank(line: &str) -> bool {
    line.trim().is_empty()
}

/// Statement keyword (`have`, `show`, ...) of a line, looking past prefixes
/// such as `then` or `from foo`.
pub fn statement_keyword(line: &str) -> Option<&'static str> {
    let code_prefix = line.split(['"', '‹']).next().unwrap_or("");
    let mut words = code_prefix.split_whitespace();
    let first = words.next()?;
    if let Some(k) = STATEMENT_KEYWORDS.iter().find(|k| **k == first) {
        return Some(k);
    }
    if !STATEMENT_PREFIXES.contains(&first) {
        return None;
    }
    for w in words {
        if let Some(k) = STATEMENT_KEYWORDS.iter().find(|k| **k == w) {
            return Some(k);
        }
    }
    None
}

pub fn is_declaration(line: &str) -> bool {
    DECL_KEYWORDS.contains(&first_word(line))
}

pub fn is_tactic_line(line: &str) -> bool {
    matches!(first_word(line), "apply" | "by" | "done")
}

/// Split a statement or declaration line carrying an inline justification
/// (`have "x" by simp`) into head and justification. `None` if there is
/// nothing to split.
pub fn split_inline(line: &str) -> Option<(String, String)> {
    if statement_keyword(line).is_none() && !is_declaration(line) {
        return None;
    }
    let chars: Vec<char> = line.chars().collect();
    let mask = lexer::code_mask(&chars);
    let words = lexer::code_words(&chars, &mask);
    // Skip the leading keyword words; the justification must follow a
    // statement body (a literal or a ?thesis-style term).
    let first_lit = chars.iter().position(|&c| c == '"' || c == '‹');
    for (a, b) in words.into_iter().skip(1) {
        let w: String = chars[a..b].iter().collect();
        if !INLINE_JUSTIFICATIONS.contains(&w.as_str()) {
            continue;
        }
        let after_body = match first_lit {
            Some(p) => a > p,
            None => chars[..a].iter().collect::<String>().contains('?'),
        };
        if !after_body {
            continue;
        }
        let head: String = chars[..a].iter().collect::<String>().trim_end().to_string();
        let rest: String = chars[a..].iter().collect::<String>().trim().to_string();
        return Some((head, rest));
    }
    None
}

/// Atomic commands on one line (head plus inline justification, if any).
pub fn line_commands(line: &str) -> Vec<String> {
    match split_inline(line) {
        Some((head, rest)) => {
            let mut v = vec![head];
            v.extend(line_commands_tail(&rest));
            v
        }
        None => {
            let t = line.trim();
            if t.is_empty() {
                vec![]
            } else {
                vec![t.to_string()]
            }
        }
    }
}

// `proof - sorry qed` style tails written on one line.
fn line_commands_tail(rest: &str) -> Vec<String> {
    let t = rest.trim();
    if first_word(t) == "proof" {
        let words: Vec<&str> = t.split_whitespace().collect();
        if words.len() >= 2 && words[1] == "-" && words.len() > 2 {
            let mut v = vec!["proof -".to_string()];
            v.extend(words[2..].iter().map(|w| w.to_string()));
            return v;
        }
    }
    vec![t.to_string()]
}

/// Rewrite every inline justification onto its own line, indented two
/// spaces deeper than its head.
pub fn split_inline_justifications(script: &ProofScript) -> ProofScript {
    let mut out = Vec::with_capacity(script.lines.len());
    for line in &script.lines {
        match split_inline(line) {
            Some((head, rest)) => {
                let ind = indent_str(line);
                out.push(head);
                out.push(format!("{}  {}", ind, rest));
            }
            None => out.push(line.clone()),
        }
    }
    ProofScript::from_lines(out).expect("splitting keeps the header")
}

// ---------------------------------------------------------------------------
// Holes

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hole {
    pub start_line: usize,
    pub end_line: usize,
    /// `[a, b)` in characters of the joined text.
    pub char_span: (usize, usize),
}

pub fn find_holes(script: &ProofScript) -> Vec<Hole> {
    let text = script.render();
    let chars: Vec<char> = text.chars().collect();
    let mask = lexer::code_mask(&chars);
    let mut line_of = Vec::with_capacity(chars.len());
    let mut line = 0;
    for &c in &chars {
        line_of.push(line);
        if c == '\n' {
            line += 1;
        }
    }
    lexer::code_words(&chars, &mask)
        .into_iter()
        .filter(|&(a, b)| chars[a..b].iter().copied().eq("sorry".chars()))
        .map(|(a, b)| Hole {
            start_line: line_of[a],
            end_line: line_of[a] + 1,
            char_span: (a, b),
        })
        .collect()
}

pub fn hole_id(script: &ProofScript, hole: &Hole, window: usize) -> Fingerprint {
    let text = script.render();
    let chars: Vec<char> = text.chars().collect();
    let (a, b) = hole.char_span;
    let lo = a.saturating_sub(window);
    let hi = (b + window).min(chars.len());
    let slice: String = chars[lo..hi].iter().collect();
    window_id(&slice)
}

/// 16-char SHA1 prefix of a hole window.
pub fn window_id(window: &str) -> Fingerprint {
    Fingerprint::of(window).short()
}

/// Hole id with the default window.
pub fn hid(script: &ProofScript, hole: &Hole) -> String {
    hole_id(script, hole, HID_WINDOW).into_string()
}

// ---------------------------------------------------------------------------
// Span replacement

pub fn replace_span(
    script: &ProofScript,
    span: Range<usize>,
    replacement: &str,
) -> Result<ProofScript, ScriptError> {
    let len = script.lines.len();
    if span.start > span.end || span.end > len {
        return Err(ScriptError::OutOfBounds { start: span.start, end: span.end, len });
    }
    if span.start <= script.header {
        return Err(ScriptError::HeaderOverlap { start: span.start, end: span.end });
    }
    let base_indent = script
        .lines
        .get(span.start)
        .map(|l| indent_str(l).to_string())
        .unwrap_or_else(|| "  ".to_string());
    let new_lines = reindent(replacement, &base_indent);
    let mut lines = Vec::with_capacity(len - span.len() + new_lines.len());
    lines.extend_from_slice(&script.lines[..span.start]);
    lines.extend(new_lines);
    lines.extend_from_slice(&script.lines[span.end..]);
    Ok(ProofScript {
        lines,
        goal: script.goal.clone(),
        header: script.header,
    })
}

/// Shift a block so its least-indented line starts at `base`.
pub fn reindent(block: &str, base: &str) -> Vec<String> {
    let raw: Vec<&str> = block.split('\n').collect();
    let trimmed_end = raw.iter().rposition(|l| !is_blank(l)).map(|p| p + 1).unwrap_or(0);
    let trimmed_start = raw.iter().position(|l| !is_blank(l)).unwrap_or(trimmed_end);
    let body = &raw[trimmed_start..trimmed_end];
    let min = body.iter().filter(|l| !is_blank(l)).map(|l| indent_of(l)).min().unwrap_or(0);
    body.iter()
        .map(|l| {
            if is_blank(l) {
                String::new()
            } else {
                format!("{}{}", base, &l[min.min(indent_of(l))..])
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Block structure

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    HaveShow,
    CaseBlock,
    Subproof,
    Whole,
}

impl BlockKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BlockKind::HaveShow => "have_show",
            BlockKind::CaseBlock => "case_block",
            BlockKind::Subproof => "subproof",
            BlockKind::Whole => "whole",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockSpan {
    pub kind: BlockKind,
    pub start_line: usize,
    pub end_line: usize,
}

impl BlockSpan {
    pub fn range(&self) -> Range<usize> {
        self.start_line..self.end_line
    }

    pub fn contains(&self, line: usize) -> bool {
        self.start_line <= line && line < self.end_line
    }

    pub fn len(&self) -> usize {
        self.end_line - self.start_line
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn text(&self, script: &ProofScript) -> String {
        script.lines[self.range()].join("\n")
    }
}

fn opens_proof(line: &str) -> bool {
    line_commands(line).iter().any(|c| first_word(c) == "proof")
}

fn closes_proof(line: &str) -> bool {
    line_commands(line).iter().any(|c| c == "qed" || first_word(c) == "qed")
}

fn last_nonblank_end(lines: &[String], from: usize, to: usize) -> usize {
    (from..to).rev().find(|&i| !is_blank(&lines[i])).map(|i| i + 1).unwrap_or(from)
}

/// `proof` line -> matching `qed` line, for every matched pair.
fn proof_pairs(lines: &[String]) -> Vec<(usize, usize)> {
    let mut stack = Vec::new();
    let mut pairs = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        let opens = opens_proof(line);
        let closes = closes_proof(line);
        if opens {
            stack.push(i);
        }
        if closes {
            if let Some(start) = stack.pop() {
                pairs.push((start, i));
            }
        }
    }
    pairs.sort();
    pairs
}

fn matching_qed(lines: &[String], proof_line: usize) -> Option<usize> {
    proof_pairs(lines).into_iter().find(|&(s, _)| s == proof_line).map(|(_, e)| e)
}

/// Extent of the justification-carrying block headed by a statement line.
fn have_show_extent(lines: &[String], head: usize) -> usize {
    if let Some((_, rest)) = split_inline(&lines[head]) {
        let fw = first_word(&rest);
        if fw == "proof" {
            return matching_qed(lines, head).map(|q| q + 1).unwrap_or(head + 1);
        }
        if TERMINAL_KEYWORDS.contains(&fw) {
            return head + 1;
        }
    }
    let head_indent = indent_of(&lines[head]);
    let mut end = head + 1;
    let mut j = head + 1;
    while j < lines.len() {
        let line = &lines[j];
        if is_blank(line) {
            j += 1;
            continue;
        }
        let fw = first_word(line);
        if fw == "proof" {
            return matching_qed(lines, j).map(|q| q + 1).unwrap_or(j + 1);
        }
        if matches!(fw, "apply" | "using" | "unfolding") {
            end = j + 1;
            j += 1;
            continue;
        }
        if TERMINAL_KEYWORDS.contains(&fw) {
            return j + 1;
        }
        if indent_of(line) > head_indent && statement_keyword(line).is_none() {
            end = j + 1;
            j += 1;
            continue;
        }
        break;
    }
    end
}

fn case_extent(lines: &[String], head: usize) -> usize {
    let c = indent_of(&lines[head]);
    let mut j = head + 1;
    while j < lines.len() {
        let line = &lines[j];
        if !is_blank(line) {
            let ind = indent_of(line);
            let fw = first_word(line);
            if ind < c || (ind == c && matches!(fw, "case" | "next" | "qed")) {
                break;
            }
        }
        j += 1;
    }
    last_nonblank_end(lines, head, j).max(head + 1)
}

/// All spans of one kind, in order of their start line.
pub fn block_spans(script: &ProofScript, kind: BlockKind) -> Vec<BlockSpan> {
    let lines = &script.lines;
    let body_start = script.header + 1;
    let mk = |s: usize, e: usize| BlockSpan { kind, start_line: s, end_line: e };
    match kind {
        BlockKind::Subproof => proof_pairs(lines)
            .into_iter()
            .filter(|&(s, _)| s >= body_start)
            .map(|(s, e)| mk(s, e + 1))
            .collect(),
        BlockKind::HaveShow => (body_start..lines.len())
            .filter(|&i| statement_keyword(&lines[i]).is_some())
            .map(|i| mk(i, have_show_extent(lines, i)))
            .collect(),
        BlockKind::CaseBlock => (body_start..lines.len())
            .filter(|&i| first_word(&lines[i]) == "case")
            .map(|i| mk(i, case_extent(lines, i)))
            .collect(),
        BlockKind::Whole => {
            let end = last_nonblank_end(lines, body_start, lines.len());
            if end > body_start {
                vec![mk(body_start, end)]
            } else {
                vec![]
            }
        }
    }
}

/// Smallest span of `kind` containing `line`.
pub fn enclosing_block(script: &ProofScript, line: usize, kind: BlockKind) -> Option<BlockSpan> {
    block_spans(script, kind)
        .into_iter()
        .filter(|s| s.contains(line))
        .min_by_key(|s| (s.len(), std::cmp::Reverse(s.start_line)))
}

/// Conservative placement check: `apply` may be spliced at a hole only when
/// the hole sits at the top level of the lemma.
pub fn is_apply_legal(script: &ProofScript, hole: &Hole) -> bool {
    let line = hole.start_line;
    enclosing_block(script, line, BlockKind::Subproof).is_none()
        && enclosing_block(script, line, BlockKind::HaveShow).is_none()
        && enclosing_block(script, line, BlockKind::CaseBlock).is_none()
}

// ---------------------------------------------------------------------------
// Partial-progress normalization

struct Rewrite {
    start: usize,
    end: usize,
    lines: Vec<String>,
    /// Offset of the new `sorry` line within `lines`.
    sorry_at: usize,
}

fn previous_nonblank(lines: &[String], i: usize) -> Option<usize> {
    (0..i).rev().find(|&j| !is_blank(&lines[j]))
}

fn rewrite_for_failure(script: &ProofScript, k: usize) -> Option<Rewrite> {
    let lines = &script.lines;
    let line = &lines[k];
    if k <= script.header {
        return None;
    }
    // Statement with an inline tactic: keep the head, open a subproof.
    if statement_keyword(line).is_some() {
        let (head, rest) = split_inline(line)?;
        if !is_tactic_line(&rest) {
            return None;
        }
        let ind = indent_str(line);
        return Some(Rewrite {
            start: k,
            end: k + 1,
            lines: vec![
                head,
                format!("{ind}proof -"),
                format!("{ind}  sorry"),
                format!("{ind}qed"),
            ],
            sorry_at: 2,
        });
    }
    let fw = first_word(line);
    if !matches!(fw, "apply" | "by" | "done") {
        return None;
    }
    // Contiguous apply run containing k, plus its terminal line.
    let mut seq_start = k;
    while let Some(p) = previous_nonblank(lines, seq_start) {
        if p > script.header && first_word(&lines[p]) == "apply" && fw != "by" {
            seq_start = p;
        } else {
            break;
        }
    }
    let mut seq_end = k + 1;
    if fw == "apply" {
        let mut j = k + 1;
        while j < lines.len() {
            if is_blank(&lines[j]) {
                j += 1;
                continue;
            }
            match first_word(&lines[j]) {
                "apply" => {
                    seq_end = j + 1;
                    j += 1;
                }
                "done" | "by" => {
                    seq_end = j + 1;
                    break;
                }
                _ => break,
            }
        }
    }
    let head = previous_nonblank(lines, seq_start);
    let under_head = head
        .map(|h| h > script.header && statement_keyword(&lines[h]).is_some() && split_inline(&lines[h]).is_none())
        .unwrap_or(false);
    let ind = indent_str(&lines[seq_start]).to_string();
    if under_head {
        Some(Rewrite {
            start: seq_start,
            end: seq_end,
            lines: vec![format!("{ind}proof -"), format!("{ind}  sorry"), format!("{ind}qed")],
            sorry_at: 1,
        })
    } else {
        let ind = indent_str(line).to_string();
        Some(Rewrite {
            start: k,
            end: seq_end,
            lines: vec![format!("{ind}sorry")],
            sorry_at: 0,
        })
    }
}

/// Replace each failing tactic line by an explicit hole. Lines that are not
/// tactic lines are left alone. Returns the rewritten script and the holes
/// that were opened.
pub fn open_minimal_sorries(script: &ProofScript, failing_lines: &[usize]) -> (ProofScript, Vec<Hole>) {
    let mut rewrites: Vec<Rewrite> = Vec::new();
    let mut sorted: Vec<usize> = failing_lines
        .iter()
        .copied()
        .filter(|&k| k < script.lines.len())
        .collect();
    sorted.sort_unstable();
    sorted.dedup();
    for k in sorted {
        if rewrites.iter().any(|r| r.start <= k && k < r.end) {
            continue;
        }
        if let Some(rw) = rewrite_for_failure(script, k) {
            if rewrites.iter().any(|r| rw.start < r.end && r.start < rw.end) {
                continue;
            }
            rewrites.push(rw);
        }
    }
    if rewrites.is_empty() {
        return (script.clone(), vec![]);
    }
    rewrites.sort_by_key(|r| r.start);
    let mut lines = Vec::with_capacity(script.lines.len());
    let mut sorry_lines = Vec::new();
    let mut i = 0;
    for rw in rewrites {
        lines.extend_from_slice(&script.lines[i..rw.start]);
        sorry_lines.push(lines.len() + rw.sorry_at);
        lines.extend(rw.lines);
        i = rw.end;
    }
    lines.extend_from_slice(&script.lines[i..]);
    let out = ProofScript {
        lines,
        goal: script.goal.clone(),
        header: script.header,
    };
    let opened = find_holes(&out)
        .into_iter()
        .filter(|h| sorry_lines.contains(&h.start_line))
        .collect();
    (out, opened)
}

/// Replace the line holding `hole` by `print_state` followed by `sorry`, so a
/// full check of the result prints the state right before the hole.
pub fn probe_at_hole(script: &ProofScript, hole: &Hole) -> ProofScript {
    let line = &script.lines[hole.start_line];
    let ind = indent_str(line);
    let chars: Vec<char> = script.render().chars().collect();
    let mut line_start = hole.char_span.0;
    while line_start > 0 && chars[line_start - 1] != '\n' {
        line_start -= 1;
    }
    let col = hole.char_span.0 - line_start;
    let line_chars: Vec<char> = line.chars().collect();
    let before: String = line_chars[..col].iter().collect();
    let after: String = line_chars[(col + 5).min(line_chars.len())..].iter().collect();
    let mut lines = script.lines[..hole.start_line].to_vec();
    if before.trim().is_empty() {
        lines.push(format!("{ind}print_state"));
        lines.push(format!("{ind}sorry{after}"));
    } else {
        lines.push(before.trim_end().to_string());
        lines.push(format!("{ind}  print_state"));
        lines.push(format!("{ind}  sorry{after}"));
    }
    lines.extend_from_slice(&script.lines[hole.end_line..]);
    ProofScript {
        lines,
        goal: script.goal.clone(),
        header: script.header,
    }
}

/// Stable 16-char fingerprint of a candidate block for ban lists.
pub fn block_fingerprint(block: &str) -> String {
    crate::fingerprint::state_fingerprint(block).short().into_string()
}

/// Whole-script identity used to dedup outlines.
pub fn script_digest(script: &ProofScript) -> String {
    sha1_hex(&crate::fingerprint::normalize_whitespace(&script.render()))
}
