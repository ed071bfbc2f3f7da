//! A document prepared for the model: augmented pieces, piece ids, windows and
//! the candidate span inventory shared by proposal and linking.

use std::collections::HashMap;

use crate::encoder::{tokenize_sequence, TokenizedSequence, Vocab};
use crate::error::Result;
use crate::preprocess::{insert_speakers, make_windows, AugmentedSequence, SpeakerTags, Window};
use crate::types::{Document, Span};

/// Every word span of width ≤ `max_len` that does not cross an inserted
/// piece and, unless `cross_sentence`, stays inside one sentence. Ordered by
/// `(start, end)`.
pub fn enumerate_spans(doc: &Document, aug: &AugmentedSequence, max_len: usize, cross_sentence: bool) -> Vec<Span> {
    let mut out = Vec::new();
    for start in 0..doc.len() {
        for end in start..doc.len().min(start + max_len) {
            if !cross_sentence && doc.tokens[end].sentence_index != doc.tokens[start].sentence_index {
                break;
            }
            if !aug.is_contiguous(start, end) {
                break;
            }
            out.push(Span::new(start, end));
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct PreparedDoc {
    pub doc: Document,
    pub aug: AugmentedSequence,
    pub tokens: TokenizedSequence,
    /// First piece of each document word.
    pub word_first: Vec<usize>,
    /// Last piece of each document word.
    pub word_last: Vec<usize>,
    pub candidates: Vec<Span>,
    pub candidate_index: HashMap<Span, usize>,
    pub windows: Vec<Window>,
}

impl PreparedDoc {
    pub fn new(
        doc: &Document,
        vocab: &Vocab,
        insert_speaker_text: bool,
        max_span_length: usize,
        cross_sentence: bool,
        window: usize,
    ) -> Result<Self> {
        let aug = if insert_speaker_text {
            insert_speakers(doc, &SpeakerTags::default())
        } else {
            AugmentedSequence::plain(doc)
        };
        let tokens = tokenize_sequence(vocab, &aug);
        let word_first = aug.orig_to_aug.iter().map(|&p| tokens.first[p]).collect();
        let word_last = aug.orig_to_aug.iter().map(|&p| tokens.last[p]).collect();
        let candidates = enumerate_spans(doc, &aug, max_span_length, cross_sentence);
        let candidate_index = candidates.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let windows = make_windows(tokens.len(), window)?;
        Ok(PreparedDoc {
            doc: doc.clone(),
            aug,
            tokens,
            word_first,
            word_last,
            candidates,
            candidate_index,
            windows,
        })
    }

    /// Piece interval `(first piece of start word, last piece of end word)`.
    pub fn piece_span(&self, span: Span) -> (usize, usize) {
        (self.word_first[span.start], self.word_last[span.end])
    }

    pub fn num_words(&self) -> usize {
        self.doc.len()
    }
}
