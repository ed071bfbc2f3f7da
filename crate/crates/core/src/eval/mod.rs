//! Coreference metrics, GAP scoring and mention recall.

pub mod assignment;
pub mod gap;
pub mod metrics;

use std::collections::BTreeSet;

pub use gap::{gap_decisions, gap_score, GapReport};
pub use metrics::{b_cubed, ceaf_phi4, evaluate, muc, CorpusScorer, Counts, MetricReport, Prf};

use crate::types::Span;

/// `|gold ∩ proposed| / |gold|`, or 1 when there are no gold mentions.
pub fn mention_recall(gold: &BTreeSet<Span>, proposed: &BTreeSet<Span>) -> f64 {
    if gold.is_empty() {
        return 1.0;
    }
    gold.intersection(proposed).count() as f64 / gold.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recall_examples() {
        let gold: BTreeSet<Span> = (0..10).map(|i| Span::new(i, i)).collect();
        let seven: BTreeSet<Span> = (0..7).map(|i| Span::new(i, i)).chain([Span::new(20, 21)]).collect();
        assert!((mention_recall(&gold, &seven) - 0.7).abs() < 1e-15);
        assert_eq!(mention_recall(&gold, &BTreeSet::new()), 0.0);
        assert_eq!(mention_recall(&gold, &gold), 1.0);
        assert_eq!(mention_recall(&BTreeSet::new(), &gold), 1.0);
    }
}
