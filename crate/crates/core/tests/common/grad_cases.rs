//! Finite-difference probes of the heads, the packed encoder and a joint step.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spanlink::autograd::{Graph, ParamStore};
use spanlink::encoder::{Encoder, EncoderConfig, PackedSequence};
use spanlink::heads::{SpanHead, TokenHead};
use spanlink::model::CorefModel;
use spanlink::train::{document_step, StepKind};

use super::{grad_check, tiny_config, tiny_setup, Probe};

pub const PROBES: usize = 24;

fn random_input(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

pub fn token_head() -> Vec<Probe> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    let head = TokenHead::new("t", 6, &mut store, &mut rng);
    let x = random_input(5, 6, &mut rng);
    let w = random_input(5, 1, &mut rng);
    grad_check(&mut store, &[], PROBES, 2, |s| {
        let mut g = Graph::new(s);
        let xi = g.input(x.clone());
        let out = head.score(&mut g, xi);
        let wi = g.input(w.clone());
        let prod = g.mul(out, wi);
        let loss = g.sum_all(prod);
        (g.scalar(loss), g.backward_scalar(loss).params)
    })
}

pub fn span_head() -> Vec<Probe> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::new();
    let head = SpanHead::new("s", 6, &mut store, &mut rng);
    let x = random_input(7, 6, &mut rng);
    let (firsts, lasts) = (vec![0, 2, 2, 5], vec![1, 2, 4, 6]);
    grad_check(&mut store, &[], PROBES, 4, |s| {
        let mut g = Graph::new(s);
        let xi = g.input(x.clone());
        let out = head.score(&mut g, xi, firsts.clone(), lasts.clone());
        let loss = g.log_sum_exp(out, vec![0, 1, 2, 3]);
        (g.scalar(loss), g.backward_scalar(loss).params)
    })
}

pub fn packed_encoder_readout() -> Vec<Probe> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let config = EncoderConfig {
        vocab_size: 20,
        hidden_dim: 8,
        num_layers: 2,
        num_heads: 2,
        max_positions: 24,
        dropout: 0.0,
    };
    let encoder = Encoder::new(config, &mut store, &mut rng).unwrap();
    let head = SpanHead::new("answer", 8, &mut store, &mut rng);
    let packed = PackedSequence::pack(&[4, 5, 6], &[7, 8, 9, 10, 11, 12, 13], 2, 3);
    let off = packed.context_offset;
    let (firsts, lasts) = (vec![off, off + 1, off + 3], vec![off + 1, off + 3, off + 6]);
    grad_check(&mut store, &[], PROBES, 6, |s| {
        let mut g = Graph::new(s);
        let x = encoder.encode_packed(&mut g, &packed).unwrap();
        let scores = head.score(&mut g, x, firsts.clone(), lasts.clone());
        let all = g.log_sum_exp(scores, vec![0, 1, 2]);
        let gold = g.log_sum_exp(scores, vec![1]);
        let loss = g.sub(all, gold);
        (g.scalar(loss), g.backward_scalar(loss).params)
    })
}

pub fn joint_document_step() -> Vec<Probe> {
    let cfg = tiny_config(16);
    let (model, docs) = tiny_setup(&cfg, 1, 11);
    assert!(docs[0].windows.len() > 1, "document should span several windows");
    let CorefModel {
        config,
        vocab,
        mut params,
        ..
    } = model;
    grad_check(&mut params, &[], PROBES, 12, |s| {
        let m = CorefModel::bind(config.clone(), vocab.clone(), s.clone()).unwrap();
        let (report, grads) = document_step(&m, &docs[0], StepKind::Joint { alpha: 0.7 }, 13, 0).unwrap();
        (report.loss, grads)
    })
}
