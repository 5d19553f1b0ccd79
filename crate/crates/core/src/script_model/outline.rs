//! Cleanup of proposer output: outline normalization and block stripping.

use super::{
    first_word, have_show_extent, indent_of, indent_str, is_blank, is_declaration, lemma_line,
    matching_qed, opens_proof, closes_proof, reindent, split_inline, split_inline_justifications,
    statement_keyword, BlockKind, ProofScript, ScriptError, ISAR_KEYWORDS,
};

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

fn looks_like_isar(line: &str) -> bool {
    let t = line.trim_start();
    if t.is_empty() {
        return true;
    }
    if t.starts_with('"') || t.starts_with('‹') || t.starts_with("(*") || t.starts_with('?') {
        return true;
    }
    ISAR_KEYWORDS.contains(&first_word(t))
}

/// Drop code fences and prose lines, and trim blank edges.
fn clean_lines(raw: &str) -> Vec<String> {
    let mut out: Vec<String> = raw
        .split('\n')
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !is_fence(l))
        .filter(|l| looks_like_isar(l))
        .map(str::to_string)
        .collect();
    while out.first().is_some_and(|l| is_blank(l)) {
        out.remove(0);
    }
    while out.last().is_some_and(|l| is_blank(l)) {
        out.pop();
    }
    out
}

/// Remove declaration lines, keeping any inline proof that followed them.
fn drop_declarations(lines: Vec<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(lines.len());
    for line in lines {
        if is_declaration(&line) {
            if let Some((_, rest)) = split_inline(&line) {
                out.push(format!("{}{}", indent_str(&line), rest));
            }
        } else {
            out.push(line);
        }
    }
    out
}

fn dedent(lines: &[String]) -> String {
    reindent(&lines.join("\n"), "").join("\n")
}

/// Reduce a proposed block to the granularity of `kind`: no fences, no
/// surrounding prose, no `lemma` header unless the whole proof is asked for.
pub fn strip_to_type(block: &str, kind: BlockKind) -> Result<String, ScriptError> {
    let lines = drop_declarations(clean_lines(block));
    let nonblank = |v: &[String]| v.iter().any(|l| !is_blank(l));
    if !nonblank(&lines) {
        return Err(ScriptError::EmptyAfterStrip(kind));
    }
    let picked: Vec<String> = match kind {
        BlockKind::Whole => lines,
        BlockKind::Subproof => match lines.iter().position(|l| opens_proof(l)) {
            Some(p) if first_word(&lines[p]) == "proof" => match matching_qed(&lines, p) {
                Some(q) => lines[p..=q].to_vec(),
                None => lines[p..].to_vec(),
            },
            _ => lines,
        },
        BlockKind::HaveShow => match lines.iter().position(|l| statement_keyword(l).is_some()) {
            Some(p) => lines[p..have_show_extent(&lines, p)].to_vec(),
            None => return Err(ScriptError::EmptyAfterStrip(kind)),
        },
        BlockKind::CaseBlock => match lines.iter().position(|l| first_word(l) == "case") {
            Some(p) => {
                let end = super::case_extent(&lines, p);
                lines[p..end].to_vec()
            }
            None => return Err(ScriptError::EmptyAfterStrip(kind)),
        },
    };
    if !nonblank(&picked) {
        return Err(ScriptError::EmptyAfterStrip(kind));
    }
    Ok(dedent(&picked))
}

/// Turn a raw outline into a well-formed gapped script for `goal`.
pub fn normalize_outline(raw: &str, goal: &str, enforce_holes: bool) -> Result<ProofScript, ScriptError> {
    let lines = clean_lines(raw);
    let decl = lines.iter().position(|l| is_declaration(l));
    let mut body: Vec<String> = Vec::new();
    match decl {
        Some(d) => {
            if let Some((_, rest)) = split_inline(&lines[d]) {
                body.push(format!("  {}", rest));
            }
            body.extend(lines[d + 1..].iter().filter(|l| !is_declaration(l)).cloned());
        }
        None => body.extend(lines.iter().cloned()),
    }
    if !body.iter().any(|l| !is_blank(l)) {
        return Err(ScriptError::Unsalvageable);
    }
    let mut body = reindent(&body.join("\n"), "");

    // A body that starts with a statement needs an enclosing proof block.
    let first = body.iter().find(|l| !is_blank(l)).map(|l| first_word(l).to_string()).unwrap_or_default();
    if matches!(first.as_str(), "have" | "show" | "obtain" | "hence" | "thus" | "fix" | "assume" | "then" | "from" | "with" | "case" | "note" | "let" | "define") {
        body = std::iter::once("proof -".to_string())
            .chain(body.into_iter().map(|l| if is_blank(&l) { l } else { format!("  {}", l) }))
            .chain(std::iter::once("qed".to_string()))
            .collect();
    }
    // A structured proof sits at column 0 under the header; apply chains are indented.
    let base = if first_word(body.iter().find(|l| !is_blank(l)).map(String::as_str).unwrap_or("")) == "proof" { "" } else { "  " };
    let body = reindent(&body.join("\n"), base);

    let mut lines = vec![lemma_line(goal)];
    lines.extend(body);
    let script = ProofScript::from_lines(lines)?;
    let script = split_inline_justifications(&script);
    let mut lines: Vec<String> = script.lines().to_vec();

    for line in lines.iter_mut() {
        let fw = first_word(line);
        if fw == "oops" || (enforce_holes && fw == "by") {
            *line = format!("{}sorry", indent_str(line));
        }
    }

    balance_proof_blocks(&mut lines);
    close_open_statements(&mut lines);
    close_top_level(&mut lines);

    let script = ProofScript::from_lines(lines)?;
    if script.commands().is_empty() {
        return Err(ScriptError::Unsalvageable);
    }
    Ok(script)
}

/// Drop unmatched `qed`s and append missing ones.
fn balance_proof_blocks(lines: &mut Vec<String>) {
    let mut depth_stack: Vec<usize> = Vec::new();
    let mut keep = vec![true; lines.len()];
    for (i, line) in lines.iter().enumerate().skip(1) {
        if opens_proof(line) {
            depth_stack.push(indent_of(line));
        }
        if closes_proof(line) && depth_stack.pop().is_none() {
            keep[i] = false;
        }
    }
    let mut idx = 0;
    lines.retain(|_| {
        idx += 1;
        keep[idx - 1]
    });
    while let Some(ind) = depth_stack.pop() {
        close_open_statements(lines);
        lines.push(format!("{}qed", " ".repeat(ind)));
    }
}

/// Give every statement lacking a justification an explicit `sorry`.
fn close_open_statements(lines: &mut Vec<String>) {
    let mut i = 1;
    while i < lines.len() {
        if statement_keyword(&lines[i]).is_some() && split_inline(&lines[i]).is_none() {
            let end = have_show_extent(lines, i);
            let last = (i..end).rev().find(|&j| !is_blank(&lines[j])).unwrap_or(i);
            let fw = first_word(&lines[last]);
            let needs = last == i || matches!(fw, "apply" | "using" | "unfolding");
            if needs {
                let ind = if last == i {
                    format!("{}  ", indent_str(&lines[i]))
                } else {
                    indent_str(&lines[last]).to_string()
                };
                lines.insert(last + 1, format!("{}sorry", ind));
            }
        }
        i += 1;
    }
}

/// A top-level apply chain without a terminal command gets a `sorry`.
fn close_top_level(lines: &mut Vec<String>) {
    let Some(last) = (1..lines.len()).rev().find(|&j| !is_blank(&lines[j])) else {
        lines.push("  sorry".to_string());
        return;
    };
    if matches!(first_word(&lines[last]), "apply" | "using" | "unfolding") {
        let ind = indent_str(&lines[last]).to_string();
        lines.insert(last + 1, format!("{}sorry", ind));
    }
}
