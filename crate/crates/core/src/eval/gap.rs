//! Gendered pronoun resolution scoring: per-gender F1 over the A/B
//! coreference decisions, the feminine/masculine bias and overall F1.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{GapDocument, GapExample, Gender};
use crate::types::{ClusterSet, Span};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub masculine_f1: f64,
    pub feminine_f1: f64,
    /// `feminine_f1 / masculine_f1`, or 0 when the masculine F1 is 0.
    pub bias: f64,
    pub overall_f1: f64,
}

/// Binary confusion counts over A/B decisions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn add(&mut self, gold: bool, pred: bool) {
        match (gold, pred) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn f1(&self) -> f64 {
        let p = if self.tp + self.fp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        };
        let r = if self.tp + self.fn_ == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        };
        super::Prf::new(p, r).f1
    }
}

/// Scores `(example_id, a_coref, b_coref)` predictions. Examples without a
/// prediction count as both-false.
pub fn gap_score(examples: &[GapExample], predictions: &[(String, bool, bool)]) -> GapReport {
    let by_id: HashMap<&str, (bool, bool)> = predictions.iter().map(|(id, a, b)| (id.as_str(), (*a, *b))).collect();
    let mut masc = Confusion::default();
    let mut fem = Confusion::default();
    let mut all = Confusion::default();
    for ex in examples {
        let (a, b) = by_id.get(ex.example_id.as_str()).copied().unwrap_or_else(|| {
            log::warn!("no prediction for GAP example {}; scoring as both false", ex.example_id);
            (false, false)
        });
        let bucket = match ex.pronoun_gender {
            Gender::Masculine => &mut masc,
            Gender::Feminine => &mut fem,
        };
        for (gold, pred) in [(ex.candidate_a.label, a), (ex.candidate_b.label, b)] {
            bucket.add(gold, pred);
            all.add(gold, pred);
        }
    }
    let (m, f) = (masc.f1(), fem.f1());
    GapReport {
        masculine_f1: m,
        feminine_f1: f,
        bias: if m > 0.0 { f / m } else { 0.0 },
        overall_f1: all.f1(),
    }
}

/// Reads A/B decisions off predicted clusters: the pronoun's cluster is the
/// one with a mention overlapping it (exact matches first), and a candidate
/// is coreferent when another mention of that cluster overlaps it.
pub fn gap_decisions(gap: &GapDocument, clusters: &ClusterSet) -> (bool, bool) {
    let find = |pred: &dyn Fn(&Span) -> bool| {
        clusters
            .clusters()
            .iter()
            .find_map(|c| c.iter().position(pred).map(|k| (c, k)))
    };
    let Some((cluster, own)) = find(&|m| *m == gap.pronoun).or_else(|| find(&|m| m.overlaps(&gap.pronoun))) else {
        return (false, false);
    };
    let hits = |cand: Span| cluster.iter().enumerate().any(|(k, m)| k != own && m.overlaps(&cand));
    (hits(gap.candidate_a), hits(gap.candidate_b))
}
