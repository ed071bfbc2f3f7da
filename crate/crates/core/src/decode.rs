//! Candidate slates with the dummy option, the marginal log-likelihood and
//! best-edge cluster decoding.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autograd::log_sum_exp;
use crate::error::{Error, Result};
use crate::types::{ClusterSet, Span};

/// Score of the dummy "no coreferent mention" option.
pub const EPSILON_SCORE: f64 = 0.0;

/// Candidates of one query followed by the dummy option.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSlate {
    pub query_span: Span,
    pub candidates: Vec<Span>,
    /// One score per candidate, then [`EPSILON_SCORE`] for the dummy.
    pub scores: Vec<f64>,
}

impl CandidateSlate {
    /// Appends the dummy score to the candidate scores.
    pub fn new(query_span: Span, candidates: Vec<Span>, candidate_scores: Vec<f64>) -> Result<Self> {
        if candidates.len() != candidate_scores.len() {
            return Err(Error::Contract(format!(
                "{} candidates but {} scores",
                candidates.len(),
                candidate_scores.len()
            )));
        }
        let mut scores = candidate_scores;
        scores.push(EPSILON_SCORE);
        Ok(CandidateSlate {
            query_span,
            candidates,
            scores,
        })
    }

    /// Index of the dummy option in `scores`.
    pub fn epsilon(&self) -> usize {
        self.candidates.len()
    }

    /// Most probable option, `None` for the dummy. The dummy wins ties, and
    /// earlier candidates win ties among themselves.
    pub fn best(&self) -> Option<Span> {
        let eps = self.epsilon();
        let mut best = eps;
        for k in 0..eps {
            if self.scores[k] > self.scores[best] || (best != eps && self.scores[k] == self.scores[best] && k < best) {
                best = k;
            }
        }
        (best != eps).then(|| self.candidates[best])
    }
}

/// Softmax over a slate's scores (candidates and dummy).
pub fn slate_distribution(scores: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(scores.iter().copied());
    scores.iter().map(|s| (s - lse).exp()).collect()
}

/// `−log Σ_{k ∈ gold} P(k)` for option indices `gold` (the dummy is
/// `scores.len() − 1`).
pub fn marginal_loss(scores: &[f64], gold: &[usize]) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::Contract("empty gold set; use the dummy option instead".into()));
    }
    if let Some(&bad) = gold.iter().find(|&&k| k >= scores.len()) {
        return Err(Error::Contract(format!(
            "gold option {bad} outside slate of {}",
            scores.len()
        )));
    }
    Ok(log_sum_exp(scores.iter().copied()) - log_sum_exp(gold.iter().map(|&k| scores[k])))
}

/// Option indices of `slate` coreferent with its query under `cluster_of`,
/// or just the dummy when there are none.
pub fn gold_options(slate: &CandidateSlate, cluster_of: &std::collections::HashMap<Span, usize>) -> Vec<usize> {
    let gold: Vec<usize> = match cluster_of.get(&slate.query_span) {
        Some(c) => slate
            .candidates
            .iter()
            .enumerate()
            .filter(|(_, s)| cluster_of.get(s) == Some(c))
            .map(|(k, _)| k)
            .collect(),
        None => Vec::new(),
    };
    if gold.is_empty() {
        vec![slate.epsilon()]
    } else {
        gold
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut c = x;
        while self.parent[c] != r {
            let next = self.parent[c];
            self.parent[c] = r;
            c = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Keeps each query's most probable option as an undirected edge, abandons
/// queries whose best option is the dummy (edges touching them are dropped)
/// and returns connected components with at least two spans.
pub fn decode_clusters(slates: &[CandidateSlate]) -> ClusterSet {
    let abandoned: std::collections::HashSet<Span> = slates
        .iter()
        .filter(|s| s.best().is_none())
        .map(|s| s.query_span)
        .collect();
    let mut ids: BTreeMap<Span, usize> = BTreeMap::new();
    let mut edges = Vec::new();
    for slate in slates {
        let Some(best) = slate.best() else { continue };
        if abandoned.contains(&best) || best == slate.query_span {
            continue;
        }
        let n = ids.len();
        let a = *ids.entry(slate.query_span).or_insert(n);
        let n = ids.len();
        let b = *ids.entry(best).or_insert(n);
        edges.push((a, b));
    }
    let mut uf = UnionFind::new(ids.len());
    for (a, b) in edges {
        uf.union(a, b);
    }
    let mut groups: BTreeMap<usize, Vec<Span>> = BTreeMap::new();
    for (&span, &id) in &ids {
        groups.entry(uf.find(id)).or_default().push(span);
    }
    let mut clusters: Vec<Vec<Span>> = groups.into_values().filter(|c| c.len() >= 2).collect();
    clusters.sort();
    ClusterSet::new(clusters).expect("components are disjoint and sorted")
}

/// Within each cluster, drops spans that partially overlap a higher-scoring
/// span of the same cluster, then drops clusters left with fewer than two
/// spans. Bracketed CoNLL columns cannot represent such pairs.
pub fn drop_crossing(clusters: &ClusterSet, score: impl Fn(Span) -> f64) -> ClusterSet {
    let mut out = Vec::with_capacity(clusters.len());
    for cluster in clusters.clusters() {
        let mut ranked = cluster.clone();
        ranked.sort_by(|a, b| score(*b).total_cmp(&score(*a)).then(a.cmp(b)));
        let mut kept: Vec<Span> = Vec::with_capacity(ranked.len());
        for s in ranked {
            if !kept.iter().any(|k| k.crosses(&s)) {
                kept.push(s);
            }
        }
        if kept.len() >= 2 {
            out.push(kept);
        }
    }
    ClusterSet::new(out).expect("subsets of disjoint clusters are disjoint")
}
