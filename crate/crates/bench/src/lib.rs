//! Shared fixtures for the benchmarks.

use spanlink::config::RunConfig;
use spanlink::layout::PreparedDoc;
use spanlink::model::CorefModel;
use spanlink::pipeline::{corpus_vocab, new_model, prepare_all};
use spanlink::synthetic::narrative_corpus;

/// Untrained desk-size model and `docs` prepared synthetic documents.
pub fn desk_fixture(docs: usize) -> (CorefModel, Vec<PreparedDoc>) {
    let corpus = narrative_corpus(docs, 7);
    let vocab = corpus_vocab(&[&corpus], &[], 1);
    let model = new_model(&RunConfig::desk(), vocab).expect("desk config is valid");
    let prepared = prepare_all(&model, &corpus).expect("synthetic documents prepare");
    (model, prepared)
}

/// Clusters of `n` mentions split round-robin into `k` groups.
pub fn round_robin(n: u32, k: u32) -> Vec<Vec<u32>> {
    (0..k).map(|c| (0..n).filter(|m| m % k == c).collect()).collect()
}
