//! Pre-norm transformer encoder over piece ids.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, ParamGroup, ParamId, ParamStore, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub max_positions: usize,
    pub dropout: f64,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.num_heads == 0 || !self.hidden_dim.is_multiple_of(self.num_heads) {
            return Err(Error::Config(format!(
                "hidden_dim {} must be a positive multiple of num_heads {}",
                self.hidden_dim, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.vocab_size == 0 || self.max_positions == 0 {
            return Err(Error::Config("vocab_size and max_positions must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Layer {
    ln1_g: ParamId,
    ln1_b: ParamId,
    w_qkv: ParamId,
    b_qkv: ParamId,
    w_o: ParamId,
    b_o: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
    w_1: ParamId,
    b_1: ParamId,
    w_2: ParamId,
    b_2: ParamId,
}

/// Query side and context side of a packed `[CLS] query [SEP] context [SEP]`
/// sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedSequence {
    pub ids: Vec<u32>,
    pub segment_ids: Vec<u8>,
    pub context_offset: usize,
}

/// Pieces added around query and context when packing.
pub const PACKING_OVERHEAD: usize = 3;

impl PackedSequence {
    pub fn pack(query: &[u32], context: &[u32], cls: u32, sep: u32) -> Self {
        let mut ids = Vec::with_capacity(query.len() + context.len() + PACKING_OVERHEAD);
        ids.push(cls);
        ids.extend_from_slice(query);
        ids.push(sep);
        let context_offset = ids.len();
        ids.extend_from_slice(context);
        ids.push(sep);
        let mut segment_ids = vec![0u8; context_offset];
        segment_ids.resize(ids.len(), 1);
        PackedSequence {
            ids,
            segment_ids,
            context_offset,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn context_len(&self) -> usize {
        self.len() - self.context_offset - 1
    }
}

/// Parameter handles for the encoder; values live in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Encoder {
    pub config: EncoderConfig,
    tok_emb: ParamId,
    pos_emb: ParamId,
    seg_emb: ParamId,
    layers: Vec<Layer>,
    ln_f_g: ParamId,
    ln_f_b: ParamId,
}

const EMB_STD: f64 = 0.02;

impl Encoder {
    /// Registers freshly initialized encoder parameters under `encoder.*`.
    pub fn new<R: Rng>(config: EncoderConfig, store: &mut ParamStore, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.hidden_dim;
        let ff = 4 * d;
        let g = ParamGroup::Encoder;
        let lin_std = (1.0 / d as f64).sqrt();
        let tok_emb = store.add_normal("encoder.tok_emb", g, (config.vocab_size, d), EMB_STD, rng);
        let pos_emb = store.add_normal("encoder.pos_emb", g, (config.max_positions, d), EMB_STD, rng);
        let seg_emb = store.add_normal("encoder.seg_emb", g, (2, d), EMB_STD, rng);
        let mut layers = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            let p = |s: &str| format!("encoder.layer{l}.{s}");
            layers.push(Layer {
                ln1_g: store.add_ones(p("ln1_g"), g, (1, d)),
                ln1_b: store.add_zeros(p("ln1_b"), g, (1, d)),
                w_qkv: store.add_normal(p("w_qkv"), g, (d, 3 * d), lin_std, rng),
                b_qkv: store.add_zeros(p("b_qkv"), g, (1, 3 * d)),
                w_o: store.add_normal(
                    p("w_o"),
                    g,
                    (d, d),
                    lin_std / (2.0 * config.num_layers as f64).sqrt(),
                    rng,
                ),
                b_o: store.add_zeros(p("b_o"), g, (1, d)),
                ln2_g: store.add_ones(p("ln2_g"), g, (1, d)),
                ln2_b: store.add_zeros(p("ln2_b"), g, (1, d)),
                w_1: store.add_normal(p("w_1"), g, (d, ff), lin_std, rng),
                b_1: store.add_zeros(p("b_1"), g, (1, ff)),
                w_2: store.add_normal(
                    p("w_2"),
                    g,
                    (ff, d),
                    (1.0 / ff as f64).sqrt() / (2.0 * config.num_layers as f64).sqrt(),
                    rng,
                ),
                b_2: store.add_zeros(p("b_2"), g, (1, d)),
            });
        }
        let ln_f_g = store.add_ones("encoder.ln_f_g", g, (1, d));
        let ln_f_b = store.add_zeros("encoder.ln_f_b", g, (1, d));
        Ok(Encoder {
            config,
            tok_emb,
            pos_emb,
            seg_emb,
            layers,
            ln_f_g,
            ln_f_b,
        })
    }

    /// Re-binds to parameters already present in `store` (e.g. after loading
    /// a checkpoint), checking their shapes.
    pub fn bind(config: EncoderConfig, store: &ParamStore) -> Result<Self> {
        config.validate()?;
        let d = config.hidden_dim;
        let ff = 4 * d;
        let get = |name: String, shape: (usize, usize)| -> Result<ParamId> {
            let id = store
                .id(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
            if store.get(id).dim() != shape {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} has shape {:?}, expected {shape:?}",
                    store.get(id).dim()
                )));
            }
            Ok(id)
        };
        let mut layers = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            let p = |s: &str| format!("encoder.layer{l}.{s}");
            layers.push(Layer {
                ln1_g: get(p("ln1_g"), (1, d))?,
                ln1_b: get(p("ln1_b"), (1, d))?,
                w_qkv: get(p("w_qkv"), (d, 3 * d))?,
                b_qkv: get(p("b_qkv"), (1, 3 * d))?,
                w_o: get(p("w_o"), (d, d))?,
                b_o: get(p("b_o"), (1, d))?,
                ln2_g: get(p("ln2_g"), (1, d))?,
                ln2_b: get(p("ln2_b"), (1, d))?,
                w_1: get(p("w_1"), (d, ff))?,
                b_1: get(p("b_1"), (1, ff))?,
                w_2: get(p("w_2"), (ff, d))?,
                b_2: get(p("b_2"), (1, d))?,
            });
        }
        Ok(Encoder {
            tok_emb: get("encoder.tok_emb".into(), (config.vocab_size, d))?,
            pos_emb: get("encoder.pos_emb".into(), (config.max_positions, d))?,
            seg_emb: get("encoder.seg_emb".into(), (2, d))?,
            ln_f_g: get("encoder.ln_f_g".into(), (1, d))?,
            ln_f_b: get("encoder.ln_f_b".into(), (1, d))?,
            layers,
            config,
        })
    }

    /// Token embedding table handle.
    pub fn token_embedding(&self) -> ParamId {
        self.tok_emb
    }

    /// One vector per piece for a single-segment input.
    pub fn encode(&self, g: &mut Graph, ids: &[u32]) -> Result<Var> {
        self.encode_segments(g, ids, &vec![0; ids.len()])
    }

    /// One vector per piece of a packed query/context pair.
    pub fn encode_packed(&self, g: &mut Graph, packed: &PackedSequence) -> Result<Var> {
        self.encode_segments(g, &packed.ids, &packed.segment_ids)
    }

    fn encode_segments(&self, g: &mut Graph, ids: &[u32], segments: &[u8]) -> Result<Var> {
        let n = ids.len();
        if n > self.config.max_positions {
            return Err(Error::Overlength {
                len: n,
                max: self.config.max_positions,
            });
        }
        if let Some(&bad) = ids.iter().find(|&&i| i as usize >= self.config.vocab_size) {
            return Err(Error::Contract(format!(
                "piece id {bad} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        let d = self.config.hidden_dim;
        let heads = self.config.num_heads;
        let dh = d / heads;
        let p = self.config.dropout;

        let tok = g.param(self.tok_emb);
        let tok = g.gather_rows(tok, ids.iter().map(|&i| i as usize).collect());
        let pos = g.param(self.pos_emb);
        let pos = g.gather_rows(pos, (0..n).collect());
        let seg = g.param(self.seg_emb);
        let seg = g.gather_rows(seg, segments.iter().map(|&s| s as usize).collect());
        let x = g.add(tok, pos);
        let x = g.add(x, seg);
        let mut x = g.dropout(x, p);

        for layer in &self.layers {
            let (lg, lb) = (g.param(layer.ln1_g), g.param(layer.ln1_b));
            let h = g.layer_norm(x, lg, lb);
            let w = g.param(layer.w_qkv);
            let b = g.param(layer.b_qkv);
            let qkv = g.matmul(h, w);
            let qkv = g.add_row(qkv, b);
            let mut outs = Vec::with_capacity(heads);
            for head in 0..heads {
                let q = g.slice_cols(qkv, head * dh, (head + 1) * dh);
                let k = g.slice_cols(qkv, d + head * dh, d + (head + 1) * dh);
                let v = g.slice_cols(qkv, 2 * d + head * dh, 2 * d + (head + 1) * dh);
                let kt = g.transpose(k);
                let att = g.matmul(q, kt);
                let att = g.scale(att, 1.0 / (dh as f64).sqrt());
                let att = g.softmax_rows(att);
                let att = g.dropout(att, p);
                outs.push(g.matmul(att, v));
            }
            let o = if heads == 1 { outs[0] } else { g.concat_cols(outs) };
            let (wo, bo) = (g.param(layer.w_o), g.param(layer.b_o));
            let o = g.matmul(o, wo);
            let o = g.add_row(o, bo);
            let o = g.dropout(o, p);
            x = g.add(x, o);

            let (lg, lb) = (g.param(layer.ln2_g), g.param(layer.ln2_b));
            let h = g.layer_norm(x, lg, lb);
            let (w1, b1) = (g.param(layer.w_1), g.param(layer.b_1));
            let f = g.matmul(h, w1);
            let f = g.add_row(f, b1);
            let f = g.gelu(f);
            let (w2, b2) = (g.param(layer.w_2), g.param(layer.b_2));
            let f = g.matmul(f, w2);
            let f = g.add_row(f, b2);
            let f = g.dropout(f, p);
            x = g.add(x, f);
        }
        let (fg, fb) = (g.param(self.ln_f_g), g.param(self.ln_f_b));
        Ok(g.layer_norm(x, fg, fb))
    }

    /// Evaluation-mode convenience: encodes without keeping the tape.
    pub fn encode_values(&self, store: &ParamStore, ids: &[u32]) -> Result<Array2<f64>> {
        let mut g = Graph::new(store);
        let out = self.encode(&mut g, ids)?;
        Ok(g.value(out).clone())
    }
}
