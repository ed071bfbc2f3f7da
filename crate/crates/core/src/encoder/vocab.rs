//! Word-piece vocabulary and greedy longest-match tokenizer.
//!
//! Continuation pieces carry a `##` prefix. Tokenization is case-sensitive and
//! applies no other normalization, so detokenizing the pieces of a word gives
//! the word back unless it contained characters outside the vocabulary, in
//! which case the whole word becomes `[UNK]`.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::preprocess::{AugmentedSequence, Origin, SPEAKER_CLOSE, SPEAKER_OPEN};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MENTION_OPEN: &str = "<mention>";
pub const MENTION_CLOSE: &str = "</mention>";

/// Entries present in every vocabulary, in id order.
pub const RESERVED: [&str; 8] = [
    PAD,
    UNK,
    CLS,
    SEP,
    SPEAKER_OPEN,
    SPEAKER_CLOSE,
    MENTION_OPEN,
    MENTION_CLOSE,
];

const CONTINUATION: &str = "##";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    pieces: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Vocabulary from an explicit piece list; reserved entries are prepended
    /// when missing.
    pub fn from_pieces<S: AsRef<str>>(pieces: &[S]) -> Self {
        let mut vocab = Vocab {
            pieces: Vec::new(),
            index: HashMap::new(),
        };
        for p in RESERVED.iter().copied().chain(pieces.iter().map(AsRef::as_ref)) {
            vocab.insert(p);
        }
        vocab
    }

    fn insert(&mut self, piece: &str) {
        if !self.index.contains_key(piece) {
            self.index.insert(piece.to_string(), self.pieces.len() as u32);
            self.pieces.push(piece.to_string());
        }
    }

    /// Builds a vocabulary from corpus words: every word seen at least
    /// `min_count` times becomes a whole piece, and every character seen is
    /// added both as a word-initial and a continuation piece.
    pub fn build<'a>(words: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for w in words {
            *counts.entry(w).or_default() += 1;
        }
        let mut whole: Vec<(&str, usize)> = counts
            .iter()
            .filter(|(_, &c)| c >= min_count)
            .map(|(&w, &c)| (w, c))
            .collect();
        whole.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let mut chars: Vec<char> = counts.keys().flat_map(|w| w.chars()).collect();
        chars.sort_unstable();
        chars.dedup();
        let mut pieces: Vec<String> = whole.into_iter().map(|(w, _)| w.to_string()).collect();
        for c in &chars {
            pieces.push(c.to_string());
            pieces.push(format!("{CONTINUATION}{c}"));
        }
        Self::from_pieces(&pieces)
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn id(&self, piece: &str) -> Option<u32> {
        self.index.get(piece).copied()
    }

    /// Id of a reserved entry.
    pub fn reserved(&self, piece: &str) -> u32 {
        self.id(piece).expect("reserved pieces are always present")
    }

    pub fn piece(&self, id: u32) -> &str {
        &self.pieces[id as usize]
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    /// Greedy longest-match-first split of one word; never empty.
    pub fn tokenize(&self, word: &str) -> Vec<u32> {
        if let Some(id) = self.id(word) {
            return vec![id];
        }
        let chars: Vec<char> = word.chars().collect();
        let mut out = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut found = None;
            for end in (start + 1..=chars.len()).rev() {
                let sub: String = chars[start..end].iter().collect();
                let key = if start == 0 {
                    sub
                } else {
                    format!("{CONTINUATION}{sub}")
                };
                if let Some(id) = self.id(&key) {
                    found = Some((id, end));
                    break;
                }
            }
            match found {
                Some((id, end)) => {
                    out.push(id);
                    start = end;
                }
                None => return vec![self.reserved(UNK)],
            }
        }
        if out.is_empty() {
            out.push(self.reserved(UNK));
        }
        out
    }

    /// Joins pieces back into text, gluing continuation pieces to their word.
    pub fn detokenize(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            let p = self.piece(id);
            match p.strip_prefix(CONTINUATION) {
                Some(rest) if !out.is_empty() => out.push_str(rest),
                _ => {
                    if !out.is_empty() {
                        out.push(' ');
                    }
                    out.push_str(p);
                }
            }
        }
        out
    }

    /// Hex SHA-256 over the newline-joined piece list.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.pieces {
            h.update(p.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = self.pieces.join("\n");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Reads one piece per line; the reserved entries must come first.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let pieces: Vec<&str> = text.lines().collect();
        if pieces.len() < RESERVED.len() || pieces[..RESERVED.len()] != RESERVED {
            return Err(Error::VocabMismatch(format!(
                "{} does not start with the reserved entries",
                path.display()
            )));
        }
        Ok(Self::from_pieces(&pieces))
    }
}

/// Piece ids for an augmented sequence, with per-position piece ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedSequence {
    pub ids: Vec<u32>,
    /// First piece of each augmented position.
    pub first: Vec<usize>,
    /// Last piece of each augmented position.
    pub last: Vec<usize>,
    /// Origin of each piece (inherited from its augmented position).
    pub origins: Vec<Origin>,
}

impl TokenizedSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub fn tokenize_sequence(vocab: &Vocab, seq: &AugmentedSequence) -> TokenizedSequence {
    let mut out = TokenizedSequence {
        ids: Vec::new(),
        first: Vec::with_capacity(seq.len()),
        last: Vec::with_capacity(seq.len()),
        origins: Vec::new(),
    };
    for piece in &seq.pieces {
        let ids = vocab.tokenize(&piece.text);
        out.first.push(out.ids.len());
        out.origins.extend(std::iter::repeat_n(piece.origin, ids.len()));
        out.ids.extend(ids);
        out.last.push(out.ids.len() - 1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{insert_speakers, SpeakerTags};
    use crate::types::Document;

    fn small() -> Vocab {
        Vocab::from_pieces(&["the", "un", "##believ", "##able", "u", "##n"])
    }

    #[test]
    fn reserved_entries_lead() {
        let v = small();
        for (i, r) in RESERVED.iter().enumerate() {
            assert_eq!(v.id(r), Some(i as u32));
        }
    }

    #[test]
    fn in_vocab_word_is_single_piece() {
        let v = small();
        assert_eq!(v.tokenize("the"), vec![v.id("the").unwrap()]);
        assert_eq!(v.tokenize(MENTION_OPEN), vec![v.reserved(MENTION_OPEN)]);
    }

    #[test]
    fn three_piece_word() {
        let v = small();
        let ids = v.tokenize("unbelievable");
        let texts: Vec<&str> = ids.iter().map(|&i| v.piece(i)).collect();
        assert_eq!(texts, vec!["un", "##believ", "##able"]);
        assert_eq!(v.detokenize(&ids), "unbelievable");
    }

    #[test]
    fn unknown_characters_map_to_unk() {
        let v = small();
        assert_eq!(v.tokenize("zebra"), vec![v.reserved(UNK)]);
    }

    #[test]
    fn built_vocab_round_trips_every_word() {
        let words = ["Anna", "saw", "Anna", "zebras", "!"];
        let v = Vocab::build(words.iter().copied(), 2);
        assert_eq!(v.tokenize("Anna").len(), 1);
        for w in words {
            assert_eq!(v.detokenize(&v.tokenize(w)), w);
        }
        assert!(v.tokenize("saw").len() == 3);
    }

    #[test]
    fn save_load_and_fingerprint() {
        let v = small();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        v.save(&path).unwrap();
        let back = Vocab::load(&path).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.fingerprint(), v.fingerprint());
        assert_ne!(Vocab::from_pieces(&["x"]).fingerprint(), v.fingerprint());
    }

    #[test]
    fn sequence_alignment_is_contiguous() {
        let v = Vocab::from_pieces(&["A", "un", "##believ", "##able", "cat"]);
        let doc = Document::from_sentences("d", &[vec!["unbelievable", "cat"]], Some(&["A"]), vec![]);
        let aug = insert_speakers(&doc, &SpeakerTags::default());
        let tok = tokenize_sequence(&v, &aug);
        assert_eq!(tok.len(), 3 + 3 + 1);
        let w0 = aug.orig_to_aug[0];
        assert_eq!((tok.first[w0], tok.last[w0]), (3, 5));
        for p in 0..aug.len() {
            assert!(tok.first[p] <= tok.last[p]);
            if p + 1 < aug.len() {
                assert_eq!(tok.last[p] + 1, tok.first[p + 1]);
            }
        }
        assert_eq!(tok.origins[4], Origin::Word(0));
    }
}
