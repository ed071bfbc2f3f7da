//! Core document and cluster types shared by every stage of the pipeline.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive word-index interval identifying a candidate mention.
///
/// Ordering is `(start, end)` ascending, which is also the tie-break order used
/// whenever spans are ranked by score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end, "span start {start} after end {end}");
        Span { start, end }
    }

    pub fn checked(start: usize, end: usize) -> Result<Self> {
        if start > end {
            return Err(Error::Contract(format!("span start {start} after end {end}")));
        }
        Ok(Span { start, end })
    }

    pub fn width(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    /// Overlapping without either span containing the other.
    pub fn crosses(&self, other: &Span) -> bool {
        self.overlaps(other) && !self.contains(other) && !other.contains(self)
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub word_index: usize,
    pub sentence_index: usize,
    pub speaker: Option<String>,
}

/// A tokenized document with sentence boundaries, speakers and gold clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_key: String,
    pub genre: String,
    pub tokens: Vec<Token>,
    pub gold_clusters: Vec<Vec<Span>>,
}

impl Document {
    /// Builds a document from sentences of words, assigning contiguous word
    /// indices. `speakers`, when given, holds one speaker per sentence.
    pub fn from_sentences(
        doc_key: impl Into<String>,
        sentences: &[Vec<&str>],
        speakers: Option<&[&str]>,
        gold_clusters: Vec<Vec<Span>>,
    ) -> Self {
        let mut tokens = Vec::new();
        for (s, words) in sentences.iter().enumerate() {
            let speaker = speakers.map(|sp| sp[s].to_string());
            for w in words {
                tokens.push(Token {
                    text: (*w).to_string(),
                    word_index: tokens.len(),
                    sentence_index: s,
                    speaker: speaker.clone(),
                });
            }
        }
        let doc_key = doc_key.into();
        let genre = genre_of(&doc_key);
        Document {
            doc_key,
            genre,
            tokens,
            gold_clusters,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.text.as_str())
    }

    pub fn num_sentences(&self) -> usize {
        self.tokens.last().map_or(0, |t| t.sentence_index + 1)
    }

    /// Word range `[start, end]` of every sentence, in order.
    pub fn sentence_spans(&self) -> Vec<Span> {
        let mut out: Vec<Span> = Vec::new();
        for t in &self.tokens {
            match out.last_mut() {
                Some(last) if self.tokens[last.start].sentence_index == t.sentence_index => {
                    last.end = t.word_index;
                }
                _ => out.push(Span::new(t.word_index, t.word_index)),
            }
        }
        out
    }

    /// Range of the sentence containing `word`.
    pub fn sentence_of(&self, word: usize) -> Span {
        let s = self.tokens[word].sentence_index;
        let mut start = word;
        while start > 0 && self.tokens[start - 1].sentence_index == s {
            start -= 1;
        }
        let mut end = word;
        while end + 1 < self.tokens.len() && self.tokens[end + 1].sentence_index == s {
            end += 1;
        }
        Span::new(start, end)
    }

    pub fn surface(&self, span: Span) -> String {
        self.tokens[span.start..=span.end]
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Union of all gold mentions, sorted.
    pub fn gold_mentions(&self) -> BTreeSet<Span> {
        self.gold_clusters.iter().flatten().copied().collect()
    }

    /// Map from gold mention to the index of its cluster.
    pub fn gold_cluster_index(&self) -> HashMap<Span, usize> {
        let mut map = HashMap::new();
        for (c, cluster) in self.gold_clusters.iter().enumerate() {
            for s in cluster {
                map.insert(*s, c);
            }
        }
        map
    }

    /// Distinct speakers in order of first appearance.
    pub fn speakers(&self) -> Vec<&str> {
        let mut seen: Vec<&str> = Vec::new();
        for t in &self.tokens {
            if let Some(sp) = t.speaker.as_deref() {
                if !seen.contains(&sp) {
                    seen.push(sp);
                }
            }
        }
        seen
    }

    /// Checks the token and cluster invariants.
    pub fn validate(&self) -> Result<()> {
        let err = |message: String| Error::ParseDocument {
            doc_key: self.doc_key.clone(),
            message,
        };
        let mut prev_sentence = 0;
        for (i, t) in self.tokens.iter().enumerate() {
            if t.word_index != i {
                return Err(err(format!("word index {} at position {i}", t.word_index)));
            }
            if t.sentence_index < prev_sentence {
                return Err(err(format!("sentence index decreases at word {i}")));
            }
            prev_sentence = t.sentence_index;
        }
        let mut seen = HashMap::new();
        for (c, cluster) in self.gold_clusters.iter().enumerate() {
            if cluster.len() < 2 {
                return Err(err(format!("cluster {c} has fewer than two mentions")));
            }
            for s in cluster {
                if s.start > s.end || s.end >= self.len() {
                    return Err(err(format!("span {s} out of bounds")));
                }
                if let Some(prev) = seen.insert(*s, c) {
                    return Err(err(format!("span {s} appears in clusters {prev} and {c}")));
                }
            }
        }
        Ok(())
    }
}

/// Genre prefix of an OntoNotes-style document key (`bc/cctv/...` → `bc`).
pub fn genre_of(doc_key: &str) -> String {
    doc_key.split('/').next().unwrap_or("").chars().take(2).collect()
}

/// Disjoint clusters of at least two spans each.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSet {
    clusters: Vec<Vec<Span>>,
}

impl ClusterSet {
    /// Validates disjointness and minimum size. Spans inside a cluster are
    /// sorted; cluster order is kept.
    pub fn new(clusters: Vec<Vec<Span>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(clusters.len());
        for mut cluster in clusters {
            cluster.sort();
            cluster.dedup();
            if cluster.len() < 2 {
                return Err(Error::Contract(format!("cluster {cluster:?} has fewer than two spans")));
            }
            for s in &cluster {
                if !seen.insert(*s) {
                    return Err(Error::Contract(format!("span {s} assigned to two clusters")));
                }
            }
            out.push(cluster);
        }
        Ok(ClusterSet { clusters: out })
    }

    pub fn empty() -> Self {
        ClusterSet::default()
    }

    pub fn clusters(&self) -> &[Vec<Span>] {
        &self.clusters
    }

    pub fn into_inner(self) -> Vec<Vec<Span>> {
        self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn mentions(&self) -> BTreeSet<Span> {
        self.clusters.iter().flatten().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentence_spans_follow_indices() {
        let doc = Document::from_sentences("t", &[vec!["a", "b"], vec!["c"]], None, vec![]);
        assert_eq!(doc.sentence_spans(), vec![Span::new(0, 1), Span::new(2, 2)]);
        assert_eq!(doc.sentence_of(1), Span::new(0, 1));
        assert_eq!(doc.sentence_of(2), Span::new(2, 2));
    }

    #[test]
    fn cluster_set_rejects_shared_span() {
        let a = Span::new(0, 0);
        let b = Span::new(1, 1);
        let c = Span::new(2, 2);
        assert!(ClusterSet::new(vec![vec![a, b], vec![b, c]]).is_err());
        assert!(ClusterSet::new(vec![vec![a]]).is_err());
        assert_eq!(ClusterSet::new(vec![vec![b, a]]).unwrap().clusters()[0], vec![a, b]);
    }

    #[test]
    fn validate_catches_out_of_bounds() {
        let doc = Document::from_sentences(
            "t",
            &[vec!["a", "b"]],
            None,
            vec![vec![Span::new(0, 0), Span::new(1, 2)]],
        );
        assert!(doc.validate().is_err());
    }

    #[test]
    fn genre_prefix() {
        assert_eq!(genre_of("bc/cctv/00/cctv_0000_0"), "bc");
        assert_eq!(genre_of("synthetic_3"), "sy");
    }
}
