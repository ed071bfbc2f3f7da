//! Two-layer feed-forward scoring heads.

use rand::Rng;

use crate::autograd::{Graph, ParamGroup, ParamId, ParamStore, Var};
use crate::error::{Error, Result};

fn lookup(store: &ParamStore, name: &str, shape: (usize, usize)) -> Result<ParamId> {
    let id = store
        .id(name)
        .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
    if store.get(id).dim() != shape {
        return Err(Error::Checkpoint(format!(
            "parameter {name} has shape {:?}, expected {shape:?}",
            store.get(id).dim()
        )));
    }
    Ok(id)
}

/// Scores single positions: `GELU(x W1 + b1) w2 + b2`.
#[derive(Debug, Clone)]
pub struct TokenHead {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl TokenHead {
    pub fn new<R: Rng>(prefix: &str, dim: usize, store: &mut ParamStore, rng: &mut R) -> Self {
        let g = ParamGroup::Heads;
        let std = (1.0 / dim as f64).sqrt();
        TokenHead {
            w1: store.add_normal(format!("{prefix}.w1"), g, (dim, dim), std, rng),
            b1: store.add_zeros(format!("{prefix}.b1"), g, (1, dim)),
            w2: store.add_normal(format!("{prefix}.w2"), g, (dim, 1), std, rng),
            b2: store.add_zeros(format!("{prefix}.b2"), g, (1, 1)),
        }
    }

    pub fn bind(prefix: &str, dim: usize, store: &ParamStore) -> Result<Self> {
        Ok(TokenHead {
            w1: lookup(store, &format!("{prefix}.w1"), (dim, dim))?,
            b1: lookup(store, &format!("{prefix}.b1"), (1, dim))?,
            w2: lookup(store, &format!("{prefix}.w2"), (dim, 1))?,
            b2: lookup(store, &format!("{prefix}.b2"), (1, 1))?,
        })
    }

    /// `n × 1` scores for the rows of `x`.
    pub fn score(&self, g: &mut Graph, x: Var) -> Var {
        let (w1, b1, w2, b2) = (g.param(self.w1), g.param(self.b1), g.param(self.w2), g.param(self.b2));
        let h = g.matmul(x, w1);
        let h = g.add_row(h, b1);
        let h = g.gelu(h);
        let o = g.matmul(h, w2);
        g.add_row(o, b2)
    }

    pub fn params(&self) -> [ParamId; 4] {
        [self.w1, self.b1, self.w2, self.b2]
    }
}

/// Scores spans from their endpoint vectors:
/// `GELU([x_first, x_last] W1 + b1) w2 + b2`, with `W1` split into the rows
/// acting on `x_first` and on `x_last`.
#[derive(Debug, Clone)]
pub struct SpanHead {
    pub w_first: ParamId,
    pub w_last: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl SpanHead {
    pub fn new<R: Rng>(prefix: &str, dim: usize, store: &mut ParamStore, rng: &mut R) -> Self {
        let g = ParamGroup::Heads;
        let std = (1.0 / (2 * dim) as f64).sqrt();
        SpanHead {
            w_first: store.add_normal(format!("{prefix}.w_first"), g, (dim, dim), std, rng),
            w_last: store.add_normal(format!("{prefix}.w_last"), g, (dim, dim), std, rng),
            b1: store.add_zeros(format!("{prefix}.b1"), g, (1, dim)),
            w2: store.add_normal(format!("{prefix}.w2"), g, (dim, 1), (1.0 / dim as f64).sqrt(), rng),
            b2: store.add_zeros(format!("{prefix}.b2"), g, (1, 1)),
        }
    }

    pub fn bind(prefix: &str, dim: usize, store: &ParamStore) -> Result<Self> {
        Ok(SpanHead {
            w_first: lookup(store, &format!("{prefix}.w_first"), (dim, dim))?,
            w_last: lookup(store, &format!("{prefix}.w_last"), (dim, dim))?,
            b1: lookup(store, &format!("{prefix}.b1"), (1, dim))?,
            w2: lookup(store, &format!("{prefix}.w2"), (dim, 1))?,
            b2: lookup(store, &format!("{prefix}.b2"), (1, 1))?,
        })
    }

    /// `k × 1` scores for spans whose endpoint rows in `x` are
    /// `firsts[i]` and `lasts[i]`.
    pub fn score(&self, g: &mut Graph, x: Var, firsts: Vec<usize>, lasts: Vec<usize>) -> Var {
        let (wf, wl, b1, w2, b2) = (
            g.param(self.w_first),
            g.param(self.w_last),
            g.param(self.b1),
            g.param(self.w2),
            g.param(self.b2),
        );
        let pf = g.matmul(x, wf);
        let pl = g.matmul(x, wl);
        let hf = g.gather_rows(pf, firsts);
        let hl = g.gather_rows(pl, lasts);
        let h = g.add(hf, hl);
        let h = g.add_row(h, b1);
        let h = g.gelu(h);
        let o = g.matmul(h, w2);
        g.add_row(o, b2)
    }

    pub fn params(&self) -> [ParamId; 5] {
        [self.w_first, self.w_last, self.b1, self.w2, self.b2]
    }
}
