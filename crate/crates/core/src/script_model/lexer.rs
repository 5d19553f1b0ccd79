//! Minimal lexical scan of proof text: which characters are code, as opposed
//! to string literals, cartouches and `(* ... *)` comments.

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Code,
    Str,
    Comment(u32),
    Cartouche(u32),
}

/// `mask[i]` is true iff `chars[i]` is outside strings, cartouches and comments.
/// Delimiters themselves count as non-code.
pub fn code_mask(chars: &[char]) -> Vec<bool> {
    let mut mask = vec![false; chars.len()];
    let mut mode = Mode::Code;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        match mode {
            Mode::Code => {
                if c == '(' && next == Some('*') {
                    mode = Mode::Comment(1);
                    i += 2;
                    continue;
                } else if c == '"' {
                    mode = Mode::Str;
                } else if c == '‹' {
                    mode = Mode::Cartouche(1);
                } else {
                    mask[i] = true;
                }
            }
            Mode::Str => {
                if c == '\\' {
                    i += 2;
                    continue;
                } else if c == '"' {
                    mode = Mode::Code;
                }
            }
            Mode::Comment(depth) => {
                if c == '(' && next == Some('*') {
                    mode = Mode::Comment(depth + 1);
                    i += 2;
                    continue;
                } else if c == '*' && next == Some(')') {
                    mode = if depth == 1 { Mode::Code } else { Mode::Comment(depth - 1) };
                    i += 2;
                    continue;
                }
            }
            Mode::Cartouche(depth) => {
                if c == '‹' {
                    mode = Mode::Cartouche(depth + 1);
                } else if c == '›' {
                    mode = if depth == 1 { Mode::Code } else { Mode::Cartouche(depth - 1) };
                }
            }
        }
        i += 1;
    }
    mask
}

pub fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\''
}

/// Char-index spans `[a, b)` of whole words that lie entirely in code.
pub fn code_words(chars: &[char], mask: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if mask[i] && is_word_char(chars[i]) {
            let start = i;
            while i < chars.len() && mask[i] && is_word_char(chars[i]) {
                i += 1;
            }
            // A word glued to a string/comment boundary still counts as a word.
            out.push((start, i));
        } else {
            i += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code_of(s: &str) -> String {
        let chars: Vec<char> = s.chars().collect();
        let mask = code_mask(&chars);
        chars.iter().zip(mask).map(|(c, m)| if m { *c } else { '_' }).collect()
    }

    #[test]
    fn strings_and_comments_masked() {
        assert_eq!(code_of(r#"a "b" c"#), "a ___ c");
        assert_eq!(code_of("x (* y (* z *) w *) v"), "x _________________ v");
        assert_eq!(code_of("p ‹q ‹r› s› t"), "p _________ t");
    }

    #[test]
    fn escaped_quote_stays_in_string() {
        assert_eq!(code_of(r#""a\"b" c"#), "______ c");
    }
}
