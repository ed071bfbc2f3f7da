//! Encoder-facing sequence preparation: speaker insertion, sliding windows and
//! max-context merging.

use std::ops::Range;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Document;

pub const SPEAKER_OPEN: &str = "<speaker>";
pub const SPEAKER_CLOSE: &str = "</speaker>";

/// Where an augmented piece came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    Word(usize),
    Special,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Piece {
    pub text: String,
    pub origin: Origin,
}

impl Piece {
    pub fn word(text: impl Into<String>, index: usize) -> Self {
        Piece {
            text: text.into(),
            origin: Origin::Word(index),
        }
    }

    pub fn special(text: impl Into<String>) -> Self {
        Piece {
            text: text.into(),
            origin: Origin::Special,
        }
    }
}

/// Document words interleaved with inserted speaker pieces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedSequence {
    pub pieces: Vec<Piece>,
    pub orig_to_aug: Vec<usize>,
    pub aug_to_orig: Vec<Option<usize>>,
}

impl AugmentedSequence {
    /// Identity augmentation: one piece per document word.
    pub fn plain(doc: &Document) -> Self {
        let pieces: Vec<Piece> = doc
            .tokens
            .iter()
            .map(|t| Piece::word(t.text.clone(), t.word_index))
            .collect();
        Self::from_pieces(pieces)
    }

    fn from_pieces(pieces: Vec<Piece>) -> Self {
        let mut orig_to_aug = Vec::new();
        let aug_to_orig = pieces
            .iter()
            .enumerate()
            .map(|(p, piece)| match piece.origin {
                Origin::Word(w) => {
                    debug_assert_eq!(w, orig_to_aug.len());
                    orig_to_aug.push(p);
                    Some(w)
                }
                Origin::Special => None,
            })
            .collect();
        AugmentedSequence {
            pieces,
            orig_to_aug,
            aug_to_orig,
        }
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// True when words `start..=end` occupy consecutive augmented positions.
    pub fn is_contiguous(&self, start: usize, end: usize) -> bool {
        self.orig_to_aug[end] - self.orig_to_aug[start] == end - start
    }
}

/// Speaker tag strings; both are reserved vocabulary entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerTags {
    pub open: String,
    pub close: String,
}

impl Default for SpeakerTags {
    fn default() -> Self {
        SpeakerTags {
            open: SPEAKER_OPEN.into(),
            close: SPEAKER_CLOSE.into(),
        }
    }
}

/// Splits a speaker name into name pieces (`Paula_Zahn` → `Paula`, `Zahn`).
pub fn speaker_name_pieces(name: &str) -> Vec<String> {
    name.split(|c: char| c == '_' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Prefixes every maximal run of same-speaker tokens with
/// `<speaker> name </speaker>`. Documents without speakers map to identity.
pub fn insert_speakers(doc: &Document, tags: &SpeakerTags) -> AugmentedSequence {
    let mut pieces = Vec::with_capacity(doc.len());
    let mut current: Option<&str> = None;
    for tok in &doc.tokens {
        let speaker = tok.speaker.as_deref();
        if let Some(name) = speaker.filter(|_| speaker != current) {
            pieces.push(Piece::special(tags.open.clone()));
            pieces.extend(speaker_name_pieces(name).into_iter().map(Piece::special));
            pieces.push(Piece::special(tags.close.clone()));
        }
        current = speaker;
        pieces.push(Piece::word(tok.text.clone(), tok.word_index));
    }
    AugmentedSequence::from_pieces(pieces)
}

/// One encoder segment over positions `start..start + len` of a longer sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub len: usize,
    /// Positions for which this window supplies the merged representation.
    pub owned: Range<usize>,
}

impl Window {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.end()
    }

    /// Distance from `p` to the nearer edge of the window.
    pub fn centrality(&self, p: usize) -> usize {
        (p - self.start).min(self.end() - 1 - p)
    }
}

/// Segments a sequence of `len` positions into windows of `size` starting
/// every `size / 2` positions. A sequence that fits in one window gets exactly
/// one; otherwise every start `k * size / 2 < len` is used and the tail window
/// may be shorter. Each position is owned by the window in which it is most
/// central, ties going to the earlier window.
pub fn make_windows(len: usize, size: usize) -> Result<Vec<Window>> {
    if size < 2 || !size.is_multiple_of(2) {
        return Err(Error::Config(format!("window size must be even and >= 2, got {size}")));
    }
    if len <= size {
        return Ok(vec![Window {
            start: 0,
            len,
            owned: 0..len,
        }]);
    }
    let stride = size / 2;
    let mut windows: Vec<Window> = (0..len)
        .step_by(stride)
        .map(|start| Window {
            start,
            len: size.min(len - start),
            owned: 0..0,
        })
        .collect();
    let mut owner = Vec::with_capacity(len);
    for p in 0..len {
        // Windows containing p have starts in (p - size, p].
        let first = if p + 1 > size {
            (p + 1 - size).div_ceil(stride)
        } else {
            0
        };
        let last = p / stride;
        let mut best = first;
        for k in first..=last.min(windows.len() - 1) {
            if windows[k].centrality(p) > windows[best].centrality(p) {
                best = k;
            }
        }
        owner.push(best);
    }
    let mut p = 0;
    while p < len {
        let k = owner[p];
        let mut q = p;
        while q < len && owner[q] == k {
            q += 1;
        }
        if !windows[k].owned.is_empty() {
            return Err(Error::Invariant(format!("window {k} owns a non-contiguous range")));
        }
        windows[k].owned = p..q;
        p = q;
    }
    for w in &mut windows {
        if w.owned.is_empty() {
            w.owned = w.start..w.start;
        }
    }
    Ok(windows)
}

/// Checks that the owned ranges tile `[0, len)` in window order.
pub fn check_ownership(windows: &[Window], len: usize) -> Result<()> {
    let mut next = 0;
    for (k, w) in windows.iter().enumerate() {
        if w.owned.is_empty() {
            continue;
        }
        if w.owned.start != next || w.owned.start < w.start || w.owned.end > w.end() {
            return Err(Error::Invariant(format!(
                "window {k} owns {:?}, expected a range starting at {next} inside {:?}",
                w.owned,
                w.range()
            )));
        }
        next = w.owned.end;
    }
    if next != len {
        return Err(Error::Invariant(format!("ownership covers [0, {next}) of [0, {len})")));
    }
    Ok(())
}

/// Assembles one vector per position by taking, for every position, the row
/// computed inside the window that owns it.
pub fn merge_windows(per_window: &[(Window, Array2<f64>)]) -> Result<Array2<f64>> {
    let windows: Vec<Window> = per_window.iter().map(|(w, _)| w.clone()).collect();
    let len = windows.iter().map(Window::end).max().unwrap_or(0);
    check_ownership(&windows, len)?;
    let dim = per_window.first().map_or(0, |(_, v)| v.ncols());
    let mut out = Array2::zeros((len, dim));
    for (w, vectors) in per_window {
        if vectors.nrows() != w.len || vectors.ncols() != dim {
            return Err(Error::Invariant(format!(
                "window at {} has {} vectors of width {}, expected {} of width {dim}",
                w.start,
                vectors.nrows(),
                vectors.ncols(),
                w.len
            )));
        }
        let local = (w.owned.start - w.start)..(w.owned.end - w.start);
        out.slice_mut(s![w.owned.clone(), ..])
            .assign(&vectors.slice(s![local, ..]));
    }
    Ok(out)
}
