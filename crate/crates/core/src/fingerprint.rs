//! SHA1 fingerprints over normalized text.

use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};
use std::fmt;

/// Hex SHA1 digest, either the full 40 characters or a 16-character prefix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fingerprint(String);

impl Fingerprint {
    pub fn of(text: &str) -> Self {
        Fingerprint(sha1_hex(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The 16-hex-char prefix used for hole ids and ban lists.
    pub fn short(&self) -> Fingerprint {
        Fingerprint(self.0.chars().take(16).collect())
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<Fingerprint> for String {
    fn from(fp: Fingerprint) -> String {
        fp.0
    }
}

pub fn sha1_hex(text: &str) -> String {
    let mut hasher = Sha1::new();
    hasher.update(text.as_bytes());
    hex::encode(hasher.finalize())
}

/// Collapse runs of spaces/tabs, strip trailing whitespace per line, drop
/// blank lines. Idempotent.
pub fn normalize_whitespace(text: &str) -> String {
    let mut out = Vec::new();
    for line in text.lines() {
        let mut collapsed = String::with_capacity(line.len());
        let mut in_run = false;
        for ch in line.chars() {
            if ch == ' ' || ch == '\t' {
                if !in_run {
                    collapsed.push(' ');
                }
                in_run = true;
            } else {
                collapsed.push(ch);
                in_run = false;
            }
        }
        let trimmed = collapsed.trim_end();
        if !trimmed.trim().is_empty() {
            out.push(trimmed.to_string());
        }
    }
    out.join("\n")
}

/// Fingerprint of a proof-state printout after whitespace normalization.
pub fn state_fingerprint(hint: &str) -> Fingerprint {
    Fingerprint::of(&normalize_whitespace(hint))
}
