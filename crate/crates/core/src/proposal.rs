//! Mention proposal: start, end and joint span heads averaged into a mention
//! score, top-k pruning and the three-classifier pretraining loss.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, ParamStore, Var};
use crate::error::{Error, Result};
use crate::heads::{SpanHead, TokenHead};
use crate::layout::PreparedDoc;
use crate::preprocess::{AugmentedSequence, Origin};
use crate::types::Span;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalConfig {
    pub max_span_length: usize,
    pub keep_ratio: f64,
    /// Negatives per positive in the span term; `None` keeps every negative.
    pub negative_ratio: Option<usize>,
    pub cross_sentence: bool,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        ProposalConfig {
            max_span_length: 10,
            keep_ratio: 0.2,
            negative_ratio: Some(3),
            cross_sentence: false,
        }
    }
}

impl ProposalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_span_length == 0 {
            return Err(Error::Config("max_span_length must be at least 1".into()));
        }
        if !(self.keep_ratio > 0.0 && self.keep_ratio <= 1.0) {
            return Err(Error::Config(format!("keep_ratio {} outside (0, 1]", self.keep_ratio)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MentionScore {
    pub span: Span,
    pub start_score: f64,
    pub end_score: f64,
    pub joint_score: f64,
    pub s_m: f64,
}

impl MentionScore {
    pub fn new(span: Span, start_score: f64, end_score: f64, joint_score: f64) -> Self {
        MentionScore {
            span,
            start_score,
            end_score,
            joint_score,
            s_m: (start_score + end_score + joint_score) / 3.0,
        }
    }
}

/// The three proposal heads.
#[derive(Debug, Clone)]
pub struct ProposalHeads {
    pub start: TokenHead,
    pub end: TokenHead,
    pub joint: SpanHead,
}

impl ProposalHeads {
    pub fn new<R: Rng>(dim: usize, store: &mut ParamStore, rng: &mut R) -> Self {
        ProposalHeads {
            start: TokenHead::new("proposal.start", dim, store, rng),
            end: TokenHead::new("proposal.end", dim, store, rng),
            joint: SpanHead::new("proposal.joint", dim, store, rng),
        }
    }

    pub fn bind(dim: usize, store: &ParamStore) -> Result<Self> {
        Ok(ProposalHeads {
            start: TokenHead::bind("proposal.start", dim, store)?,
            end: TokenHead::bind("proposal.end", dim, store)?,
            joint: SpanHead::bind("proposal.joint", dim, store)?,
        })
    }
}

/// Graph handles for one document's proposal scores.
#[derive(Debug, Clone, Copy)]
pub struct ProposalVars {
    /// `n × 1` start score per document word.
    pub start: Var,
    /// `n × 1` end score per document word.
    pub end: Var,
    /// `k × 1` joint score per candidate span.
    pub joint: Var,
    /// `1 × k` mention score per candidate span.
    pub s_m: Var,
}

/// Per-word start/end scores (from each word's first and last piece) and
/// joint and mention scores over `doc.candidates`.
pub fn score_spans(g: &mut Graph, heads: &ProposalHeads, doc: &PreparedDoc, encoded: Var) -> ProposalVars {
    let firsts = g.gather_rows(encoded, doc.word_first.clone());
    let lasts = g.gather_rows(encoded, doc.word_last.clone());
    let start = heads.start.score(g, firsts);
    let end = heads.end.score(g, lasts);
    let (pf, pl): (Vec<usize>, Vec<usize>) = doc.candidates.iter().map(|&s| doc.piece_span(s)).unzip();
    let joint = heads.joint.score(g, encoded, pf, pl);
    let st = g.gather_flat(start, doc.candidates.iter().map(|s| s.start).collect());
    let en = g.gather_flat(end, doc.candidates.iter().map(|s| s.end).collect());
    let jt = g.transpose(joint);
    let sum = g.add(st, en);
    let sum = g.add(sum, jt);
    let s_m = g.div_scalar(sum, 3.0);
    ProposalVars { start, end, joint, s_m }
}

/// Reads the scores of every candidate out of the graph.
pub fn mention_scores(g: &Graph, vars: &ProposalVars, doc: &PreparedDoc) -> Vec<MentionScore> {
    let (st, en, jt) = (g.value(vars.start), g.value(vars.end), g.value(vars.joint));
    doc.candidates
        .iter()
        .enumerate()
        .map(|(k, &s)| MentionScore::new(s, st[[s.start, 0]], en[[s.end, 0]], jt[[k, 0]]))
        .collect()
}

/// Start or end scores laid out over augmented positions, with inserted
/// pieces at −∞.
pub fn augmented_boundary_scores(aug: &AugmentedSequence, word_scores: &[f64]) -> Vec<f64> {
    aug.pieces
        .iter()
        .map(|p| match p.origin {
            Origin::Word(w) => word_scores[w],
            Origin::Special => f64::NEG_INFINITY,
        })
        .collect()
}

/// `ceil(ratio · n)`.
pub fn keep_count(num_words: usize, keep_ratio: f64) -> usize {
    (keep_ratio * num_words as f64).ceil() as usize
}

/// Sort order for ranked spans: score descending, then `(start, end)`.
pub fn rank_order(a: (Span, f64), b: (Span, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Top `ceil(keep_ratio · num_words)` candidates by mention score.
pub fn propose(scores: &[MentionScore], num_words: usize, keep_ratio: f64) -> Vec<MentionScore> {
    let mut ranked = scores.to_vec();
    ranked.sort_by(|a, b| rank_order((a.span, a.s_m), (b.span, b.s_m)));
    ranked.truncate(keep_count(num_words, keep_ratio));
    ranked
}

/// Labels for the pretraining classifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalTargets {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    /// Candidate indices used by the span term, ascending.
    pub span_indices: Vec<usize>,
    pub span_labels: Vec<f64>,
}

/// Builds classifier labels; span-term negatives are sampled without
/// replacement down to `negative_ratio × max(positives, 1)`.
pub fn proposal_targets<R: Rng>(
    doc: &PreparedDoc,
    gold: &BTreeSet<Span>,
    negative_ratio: Option<usize>,
    rng: &mut R,
) -> ProposalTargets {
    let n = doc.num_words();
    let mut start = vec![0.0; n];
    let mut end = vec![0.0; n];
    for s in gold {
        start[s.start] = 1.0;
        end[s.end] = 1.0;
    }
    let (pos, neg): (Vec<usize>, Vec<usize>) =
        (0..doc.candidates.len()).partition(|&k| gold.contains(&doc.candidates[k]));
    let neg = match negative_ratio {
        Some(r) if neg.len() > r * pos.len().max(1) => {
            let keep = r * pos.len().max(1);
            let mut picked: Vec<usize> = rand::seq::index::sample(rng, neg.len(), keep)
                .into_iter()
                .map(|i| neg[i])
                .collect();
            picked.sort_unstable();
            picked
        }
        _ => neg,
    };
    let mut span_indices: Vec<usize> = pos.iter().chain(&neg).copied().collect();
    span_indices.sort_unstable();
    let span_labels = span_indices
        .iter()
        .map(|&k| if gold.contains(&doc.candidates[k]) { 1.0 } else { 0.0 })
        .collect();
    ProposalTargets {
        start,
        end,
        span_indices,
        span_labels,
    }
}

/// Sum of the mean binary cross-entropies of the start, end and span
/// classifiers.
pub fn proposal_pretrain_loss(g: &mut Graph, vars: &ProposalVars, targets: &ProposalTargets) -> Var {
    let ls = g.bce_with_logits(vars.start, targets.start.clone());
    let le = g.bce_with_logits(vars.end, targets.end.clone());
    let joint = g.gather_flat(vars.joint, targets.span_indices.clone());
    let lj = g.bce_with_logits(joint, targets.span_labels.clone());
    let sum = g.add(ls, le);
    g.add(sum, lj)
}
