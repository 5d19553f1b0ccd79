//! Tokenizer shared by premise retrieval and hint lookup.

/// Split on anything other than alphanumerics and `_`, lowercase, and drop
/// single-character tokens.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| t.chars().count() > 1)
        .map(str::to_lowercase)
        .collect()
}

/// Whether `word` occurs in `text` as a whole token (case-sensitive, with
/// `.` and `'` allowed inside names).
pub fn contains_word(text: &str, word: &str) -> bool {
    if word.is_empty() {
        return false;
    }
    let is_name = |c: char| c.is_alphanumeric() || c == '_' || c == '.' || c == '\'';
    text.split(|c: char| !is_name(c)).any(|t| t == word)
}
