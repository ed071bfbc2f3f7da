//! MUC, B³ and CEAF-φ4 over clusterings of arbitrary mention identifiers.
//!
//! Each metric is computed as numerator/denominator counts so that corpus
//! scores can be micro-averaged by summing counts over documents. A zero
//! denominator yields 0, and F1 is 0 when precision and recall are both 0.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::assignment::max_weight_assignment;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf { precision, recall, f1 }
    }
}

/// Recall and precision as ratios of summable counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub recall_num: f64,
    pub recall_den: f64,
    pub precision_num: f64,
    pub precision_den: f64,
}

impl Counts {
    pub fn prf(&self) -> Prf {
        let ratio = |n: f64, d: f64| if d == 0.0 { 0.0 } else { n / d };
        Prf::new(
            ratio(self.precision_num, self.precision_den),
            ratio(self.recall_num, self.recall_den),
        )
    }
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.recall_num += o.recall_num;
        self.recall_den += o.recall_den;
        self.precision_num += o.precision_num;
        self.precision_den += o.precision_den;
    }
}

fn index<M: Hash + Eq>(clusters: &[Vec<M>]) -> HashMap<&M, usize> {
    clusters
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.iter().map(move |m| (m, i)))
        .collect()
}

/// `Σ_k (|k| − |partition of k by other|)` and `Σ_k (|k| − 1)`; mentions of
/// `k` missing from `other` form their own parts.
fn muc_side<M: Hash + Eq>(clusters: &[Vec<M>], other: &[Vec<M>]) -> (f64, f64) {
    let other_of = index(other);
    let mut num = 0.0;
    let mut den = 0.0;
    for c in clusters {
        let mut parts = std::collections::HashSet::new();
        let mut missing = 0;
        for m in c {
            match other_of.get(m) {
                Some(&p) => {
                    parts.insert(p);
                }
                None => missing += 1,
            }
        }
        num += (c.len() - parts.len() - missing) as f64;
        den += (c.len() - 1) as f64;
    }
    (num, den)
}

pub fn muc_counts<M: Hash + Eq>(gold: &[Vec<M>], pred: &[Vec<M>]) -> Counts {
    let (recall_num, recall_den) = muc_side(gold, pred);
    let (precision_num, precision_den) = muc_side(pred, gold);
    Counts {
        recall_num,
        recall_den,
        precision_num,
        precision_den,
    }
}

/// `Σ_k Σ_o |k ∩ o|² / |k|` and `Σ_k |k|`.
fn b_cubed_side<M: Hash + Eq>(clusters: &[Vec<M>], other: &[Vec<M>]) -> (f64, f64) {
    let other_of = index(other);
    let mut num = 0.0;
    let mut den = 0.0;
    for c in clusters {
        let mut overlap: HashMap<usize, usize> = HashMap::new();
        for m in c {
            if let Some(&o) = other_of.get(m) {
                *overlap.entry(o).or_default() += 1;
            }
        }
        let mut keys: Vec<_> = overlap.into_iter().collect();
        keys.sort_unstable();
        num += keys.iter().map(|&(_, n)| (n * n) as f64 / c.len() as f64).sum::<f64>();
        den += c.len() as f64;
    }
    (num, den)
}

pub fn b_cubed_counts<M: Hash + Eq>(gold: &[Vec<M>], pred: &[Vec<M>]) -> Counts {
    let (recall_num, recall_den) = b_cubed_side(gold, pred);
    let (precision_num, precision_den) = b_cubed_side(pred, gold);
    Counts {
        recall_num,
        recall_den,
        precision_num,
        precision_den,
    }
}

/// `φ4(k, r) = 2 |k ∩ r| / (|k| + |r|)`.
pub fn phi4<M: Hash + Eq>(k: &[M], r: &[M]) -> f64 {
    let set: std::collections::HashSet<&M> = k.iter().collect();
    let common = r.iter().filter(|m| set.contains(m)).count();
    2.0 * common as f64 / (k.len() + r.len()) as f64
}

/// Entity-based CEAF with φ4 similarity and an optimal one-to-one alignment.
pub fn ceaf_phi4_counts<M: Hash + Eq>(gold: &[Vec<M>], pred: &[Vec<M>]) -> Counts {
    let weights: Vec<Vec<f64>> = gold.iter().map(|k| pred.iter().map(|r| phi4(k, r)).collect()).collect();
    let total = if gold.is_empty() || pred.is_empty() {
        0.0
    } else {
        max_weight_assignment(&weights).1
    };
    Counts {
        recall_num: total,
        recall_den: gold.len() as f64,
        precision_num: total,
        precision_den: pred.len() as f64,
    }
}

pub fn muc<M: Hash + Eq>(gold: &[Vec<M>], pred: &[Vec<M>]) -> Prf {
    muc_counts(gold, pred).prf()
}

pub fn b_cubed<M: Hash + Eq>(gold: &[Vec<M>], pred: &[Vec<M>]) -> Prf {
    b_cubed_counts(gold, pred).prf()
}

pub fn ceaf_phi4<M: Hash + Eq>(gold: &[Vec<M>], pred: &[Vec<M>]) -> Prf {
    ceaf_phi4_counts(gold, pred).prf()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub muc: Prf,
    pub b_cubed: Prf,
    pub ceaf_phi4: Prf,
    pub conll_avg_f1: f64,
}

/// Accumulates counts over documents.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusScorer {
    pub muc: Counts,
    pub b_cubed: Counts,
    pub ceaf_phi4: Counts,
}

impl CorpusScorer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add<M: Hash + Eq>(&mut self, gold: &[Vec<M>], pred: &[Vec<M>]) {
        self.muc += muc_counts(gold, pred);
        self.b_cubed += b_cubed_counts(gold, pred);
        self.ceaf_phi4 += ceaf_phi4_counts(gold, pred);
    }

    pub fn report(&self) -> MetricReport {
        let (m, b, c) = (self.muc.prf(), self.b_cubed.prf(), self.ceaf_phi4.prf());
        MetricReport {
            muc: m,
            b_cubed: b,
            ceaf_phi4: c,
            conll_avg_f1: (m.f1 + b.f1 + c.f1) / 3.0,
        }
    }
}

/// Scores one document.
pub fn evaluate<M: Hash + Eq>(gold: &[Vec<M>], pred: &[Vec<M>]) -> MetricReport {
    let mut s = CorpusScorer::new();
    s.add(gold, pred);
    s.report()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cl(names: &[&str]) -> Vec<Vec<char>> {
        names.iter().map(|c| c.chars().collect()).collect()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn muc_missing_mention() {
        let p = muc(&cl(&["abc"]), &cl(&["ab"]));
        assert!(close(p.recall, 0.5) && close(p.precision, 1.0) && close(p.f1, 2.0 / 3.0));
    }

    #[test]
    fn b_cubed_split_cluster() {
        let p = b_cubed(&cl(&["abc"]), &cl(&["ab", "c"]));
        assert!(close(p.recall, 5.0 / 9.0) && close(p.precision, 1.0) && close(p.f1, 5.0 / 7.0));
    }

    #[test]
    fn ceaf_against_exhaustive_pairing() {
        let gold = cl(&["abc"]);
        let pred = cl(&["ab", "cd"]);
        let best = phi4(&gold[0], &pred[0]).max(phi4(&gold[0], &pred[1]));
        let p = ceaf_phi4(&gold, &pred);
        assert!(close(p.recall, best) && close(p.precision, best / 2.0));
    }

    #[test]
    fn identity_and_disjoint() {
        let g = cl(&["ab", "cde"]);
        let r = evaluate(&g, &g);
        assert_eq!(
            (r.muc.f1, r.b_cubed.f1, r.ceaf_phi4.f1, r.conll_avg_f1),
            (1.0, 1.0, 1.0, 1.0)
        );
        let r = evaluate(&g, &cl(&["xy"]));
        assert_eq!((r.muc.f1, r.b_cubed.f1, r.ceaf_phi4.f1), (0.0, 0.0, 0.0));
        let r = evaluate(&g, &Vec::<Vec<char>>::new());
        assert_eq!((r.muc.recall, r.b_cubed.recall, r.ceaf_phi4.recall), (0.0, 0.0, 0.0));
    }
}
