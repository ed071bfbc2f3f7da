//! Plain-text word segmentation with character offsets.
//!
//! Words are maximal runs of alphanumeric characters; every other non-space
//! character is its own token. Offsets count Unicode scalar values, matching
//! the offsets used by GAP and SQuAD.

use crate::types::Span;

/// Character interval `[start, end)` in a text, counted in Unicode scalar values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn new(start: usize, end: usize) -> Self {
        CharSpan { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn overlaps(&self, other: &CharSpan) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Substring of `text` covered by a character span, or `None` if out of bounds.
pub fn char_slice(text: &str, span: CharSpan) -> Option<&str> {
    if span.start > span.end {
        return None;
    }
    let mut indices = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
    let start = indices.nth(span.start)?;
    let end = if span.end == span.start {
        start
    } else {
        indices.nth(span.end - span.start - 1)?
    };
    Some(&text[start..end])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordToken {
    pub text: String,
    pub chars: CharSpan,
}

/// Splits text into words and single-character punctuation tokens.
pub fn tokenize_words(text: &str) -> Vec<WordToken> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut current_start = 0;
    let flush = |current: &mut String, start: usize, end: usize, out: &mut Vec<WordToken>| {
        if !current.is_empty() {
            out.push(WordToken {
                text: std::mem::take(current),
                chars: CharSpan::new(start, end),
            });
        }
    };
    let mut pos = 0;
    for c in text.chars() {
        if c.is_alphanumeric() {
            if current.is_empty() {
                current_start = pos;
            }
            current.push(c);
        } else {
            flush(&mut current, current_start, pos, &mut out);
            if !c.is_whitespace() {
                out.push(WordToken {
                    text: c.to_string(),
                    chars: CharSpan::new(pos, pos + 1),
                });
            }
        }
        pos += 1;
    }
    flush(&mut current, current_start, pos, &mut out);
    out
}

/// Assigns a sentence index to each word: a sentence ends after `.`, `!` or `?`.
pub fn split_sentences(words: &[WordToken]) -> Vec<usize> {
    let mut out = Vec::with_capacity(words.len());
    let mut sentence = 0;
    for (i, w) in words.iter().enumerate() {
        out.push(sentence);
        if matches!(w.text.as_str(), "." | "!" | "?") && i + 1 < words.len() {
            sentence += 1;
        }
    }
    out
}

/// Smallest word span covering every word that overlaps `chars`.
pub fn words_covering(words: &[WordToken], chars: CharSpan) -> Option<Span> {
    let mut hit = words
        .iter()
        .enumerate()
        .filter(|(_, w)| w.chars.overlaps(&chars))
        .map(|(i, _)| i);
    let first = hit.next()?;
    let last = hit.next_back().unwrap_or(first);
    Some(Span::new(first, last))
}
