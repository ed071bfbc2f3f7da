//! Helpers shared by the integration tests and the acceptance runner.

#![allow(dead_code)]

pub mod grad_cases;
pub mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spanlink::autograd::{GradStore, ParamId, ParamStore};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Largest accepted relative error between analytic and numeric gradients.
pub const GRAD_TOL: f64 = 1e-4;

/// One compared gradient entry.
#[derive(Debug, Clone)]
pub struct Probe {
    pub param: String,
    pub index: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
}

impl Probe {
    pub fn rel_err(&self) -> f64 {
        let scale = self.analytic.abs().max(self.numeric.abs());
        if scale < 1e-9 {
            (self.analytic - self.numeric).abs()
        } else {
            (self.analytic - self.numeric).abs() / scale
        }
    }
}

/// Compares `loss_and_grad` against central differences at `count` random
/// entries of `params` (all parameters when empty). Entries whose analytic
/// gradient is below `1e-7` are redrawn so that probes exercise live paths.
pub fn grad_check(
    store: &mut ParamStore,
    params: &[ParamId],
    count: usize,
    seed: u64,
    loss_and_grad: impl Fn(&ParamStore) -> (f64, GradStore),
) -> Vec<Probe> {
    let ids: Vec<ParamId> = if params.is_empty() {
        store.ids().collect()
    } else {
        params.to_vec()
    };
    let (_, grads) = loss_and_grad(store);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = Vec::with_capacity(count);
    let mut attempts = 0;
    while probes.len() < count && attempts < 200 * count {
        attempts += 1;
        let id = ids[rng.random_range(0..ids.len())];
        let (rows, cols) = store.get(id).dim();
        let (r, c) = (rng.random_range(0..rows), rng.random_range(0..cols));
        let analytic = grads.get(id).map_or(0.0, |g| g[[r, c]]);
        if analytic.abs() < 1e-7 {
            continue;
        }
        let orig = store.get(id)[[r, c]];
        store.get_mut(id)[[r, c]] = orig + FD_STEP;
        let plus = loss_and_grad(store).0;
        store.get_mut(id)[[r, c]] = orig - FD_STEP;
        let minus = loss_and_grad(store).0;
        store.get_mut(id)[[r, c]] = orig;
        probes.push(Probe {
            param: store.entry(id).name.clone(),
            index: (r, c),
            analytic,
            numeric: (plus - minus) / (2.0 * FD_STEP),
        });
    }
    probes
}

pub fn max_rel_err(probes: &[Probe]) -> f64 {
    probes.iter().map(Probe::rel_err).fold(0.0, f64::max)
}

/// Desk settings shrunk further so finite differences stay cheap.
pub fn tiny_config(window: usize) -> spanlink::config::RunConfig {
    let mut cfg = spanlink::config::RunConfig::desk();
    cfg.encoder.window = window;
    cfg.encoder.hidden_dim = 8;
    cfg.encoder.num_layers = 1;
    cfg.encoder.num_heads = 2;
    cfg.encoder.dropout = 0.0;
    cfg.linking.antecedent_cap = 4;
    cfg
}

/// Model and prepared documents over a small narrative corpus.
pub fn tiny_setup(
    cfg: &spanlink::config::RunConfig,
    docs: usize,
    seed: u64,
) -> (spanlink::model::CorefModel, Vec<spanlink::layout::PreparedDoc>) {
    let corpus = spanlink::synthetic::narrative_corpus(docs, seed);
    let vocab = spanlink::pipeline::corpus_vocab(&[&corpus], &[], 1);
    let model = spanlink::pipeline::new_model(cfg, vocab).unwrap();
    let prepared = spanlink::pipeline::prepare_all(&model, &corpus).unwrap();
    (model, prepared)
}
