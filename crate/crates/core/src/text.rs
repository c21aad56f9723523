//! Word counting, hard word limits, and sentence segmentation.

use crate::corpus::AnswerSentence;

/// Number of whitespace-separated tokens.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Lowercased alphanumeric runs; everything else separates tokens.
pub fn lower_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Truncates `text` to at most `limit` whitespace tokens.
///
/// Compliant input is returned unchanged. Otherwise the first `limit`
/// tokens are kept verbatim (including any punctuation attached to the
/// last one) and joined by single spaces.
pub fn enforce_word_limit(text: &str, limit: usize) -> String {
    assert!(limit >= 1, "word limit must be positive");
    if word_count(text) <= limit {
        return text.to_string();
    }
    text.split_whitespace()
        .take(limit)
        .collect::<Vec<_>>()
        .join(" ")
}

pub const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "dr.", "mr.", "mrs.", "ms.", "vs.", "e.g.", "i.e.", "approx.", "no.", "st.", "pt.", "hx.",
    "dx.", "tx.", "b.i.d.", "t.i.d.", "q.i.d.", "q.d.", "p.o.", "p.r.n.", "h.s.", "fig.",
];

/// Rule-based sentence splitter.
///
/// A boundary is a run of `.`, `!` or `?` (plus closing quotes or brackets)
/// followed by whitespace and then an uppercase letter, a digit, or an
/// opening quote/bracket. A `.` that ends a listed abbreviation is never a
/// boundary; decimals never are because no whitespace follows the point.
#[derive(Debug, Clone)]
pub struct Segmenter {
    abbreviations: Vec<String>,
}

impl Default for Segmenter {
    fn default() -> Self {
        Segmenter::with_abbreviations(DEFAULT_ABBREVIATIONS.iter().copied())
    }
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
}

fn opens_sentence(c: char) -> bool {
    c.is_uppercase() || c.is_ascii_digit() || matches!(c, '"' | '(' | '[' | '\u{201c}')
}

impl Segmenter {
    pub fn with_abbreviations<S: Into<String>>(abbrevs: impl IntoIterator<Item = S>) -> Self {
        Segmenter {
            abbreviations: abbrevs
                .into_iter()
                .map(|a| a.into().to_lowercase())
                .collect(),
        }
    }

    fn ends_with_abbreviation(&self, before: &str) -> bool {
        let token = before
            .rsplit(char::is_whitespace)
            .next()
            .unwrap_or("")
            .trim_start_matches(['(', '"', '[']);
        let token = token.to_lowercase();
        self.abbreviations.contains(&token)
    }

    pub fn split<'a>(&self, text: &'a str) -> Vec<&'a str> {
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut out = Vec::new();
        let mut start = 0usize;
        let mut i = 0usize;
        while i < chars.len() {
            let (pos, c) = chars[i];
            if !is_terminator(c) {
                i += 1;
                continue;
            }
            let mut j = i + 1;
            while j < chars.len() && (is_terminator(chars[j].1) || is_closer(chars[j].1)) {
                j += 1;
            }
            if j >= chars.len() || !chars[j].1.is_whitespace() {
                i = j.max(i + 1);
                continue;
            }
            let mut k = j;
            while k < chars.len() && chars[k].1.is_whitespace() {
                k += 1;
            }
            if k >= chars.len() || !opens_sentence(chars[k].1) {
                i = k;
                continue;
            }
            // abbreviation check only applies to a lone '.'
            if c == '.' && j == i + 1 && self.ends_with_abbreviation(&text[start..=pos]) {
                i = k;
                continue;
            }
            let piece = text[start..chars[j].0].trim();
            if !piece.is_empty() {
                out.push(piece);
            }
            start = chars[k].0;
            i = k;
        }
        let tail = text[start..].trim();
        if !tail.is_empty() {
            out.push(tail);
        }
        out
    }
}

/// Splits answer text into sentences numbered "1".."m".
pub fn split_sentences(text: &str) -> Vec<AnswerSentence> {
    Segmenter::default()
        .split(text)
        .into_iter()
        .enumerate()
        .map(|(i, s)| AnswerSentence {
            id: (i + 1).to_string(),
            text: s.to_string(),
        })
        .collect()
}
