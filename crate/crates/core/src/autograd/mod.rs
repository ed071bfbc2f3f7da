//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Graph`] records operations on [`Var`] handles while computing their
//! values eagerly. Parameters are read from a borrowed [`ParamStore`]; calling
//! [`Graph::backward`] propagates seed gradients to every node and collects
//! parameter gradients into a [`GradStore`].

mod params;

pub use params::{GradStore, ParamEntry, ParamGroup, ParamId, ParamStore};

use std::collections::HashMap;

use ndarray::{s, Array2, Axis, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Dropout(Var, Array2<f64>),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Array2<f64>,
        inv_std: Vec<f64>,
    },
    SoftmaxRows(Var),
    GatherRows(Var, Vec<usize>),
    GatherFlat(Var, Vec<usize>),
    SliceCols(Var, usize, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SumAll(Var),
    LogSumExp(Var, Vec<usize>),
    BceWithLogits(Var, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

const LN_EPS: f64 = 1e-5;
const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_C: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_K * (x + GELU_C * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_K * (x + GELU_C * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_K * (1.0 + 3.0 * GELU_C * x * x)
}

/// Numerically stable `ln Σ exp`.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.into_iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Computation tape. Values are computed when nodes are created.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
    dropout_rng: Option<ChaCha8Rng>,
}

impl<'p> Graph<'p> {
    /// Evaluation-mode graph: dropout is the identity.
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            dropout_rng: None,
        }
    }

    /// Training-mode graph drawing dropout masks from `rng`.
    pub fn training(params: &'p ParamStore, rng: ChaCha8Rng) -> Self {
        Graph {
            dropout_rng: Some(rng),
            ..Graph::new(params)
        }
    }

    pub fn is_training(&self) -> bool {
        self.dropout_rng.is_some()
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    /// Value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        debug_assert_eq!(val.dim(), (1, 1));
        val[[0, 0]]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Input)
    }

    /// Row vector input.
    pub fn input_row(&mut self, values: Vec<f64>) -> Var {
        let n = values.len();
        self.input(Array2::from_shape_vec((1, n), values).expect("row shape"))
    }

    /// Node for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let v = self.push(self.params.get(id).clone(), Op::Param);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).t().to_owned();
        self.push(value, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "add shape mismatch");
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    /// Adds a `1 × n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.value(row).nrows(), 1, "add_row expects a row vector");
        let value = self.value(a) + self.value(row);
        self.push(value, Op::AddRow(a, row))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "sub shape mismatch");
        let value = self.value(a) - self.value(b);
        self.push(value, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "mul shape mismatch");
        let value = self.value(a) * self.value(b);
        self.push(value, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) * c;
        self.push(value, Op::Scale(a, c))
    }

    /// Elementwise division by `c`, rounded like `x / c`.
    pub fn div_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) / c;
        self.push(value, Op::Scale(a, 1.0 / c))
    }

    /// Inverted dropout; identity in evaluation mode or when `p == 0`.
    pub fn dropout(&mut self, a: Var, p: f64) -> Var {
        let Some(rng) = self.dropout_rng.as_mut() else {
            return a;
        };
        if p <= 0.0 {
            return a;
        }
        let keep = 1.0 - p;
        let dim = self.nodes[a.0].value.dim();
        let mask = Array2::from_shape_simple_fn(dim, || if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 });
        let value = self.value(a) * &mask;
        self.push(value, Op::Dropout(a, mask))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(gelu);
        self.push(value, Op::Gelu(a))
    }

    /// Row-wise layer normalization with `1 × d` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let d = xv.ncols() as f64;
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / d;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
            let is = 1.0 / (var + LN_EPS).sqrt();
            row.mapv_inplace(|v| (v - mean) * is);
            inv_std.push(is);
        }
        let value = &xhat * self.value(gamma) + self.value(beta);
        self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for mut row in value.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        self.push(value, Op::SoftmaxRows(a))
    }

    /// Rows `idx[0], idx[1], ...` of `a`, repeats allowed.
    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let value = self.value(a).select(Axis(0), &idx);
        self.push(value, Op::GatherRows(a, idx))
    }

    /// Row vector of the elements of `a` at row-major positions `idx`.
    pub fn gather_flat(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let src = self.value(a);
        let cols = src.ncols();
        let values: Vec<f64> = idx.iter().map(|&k| src[[k / cols, k % cols]]).collect();
        let value = Array2::from_shape_vec((1, idx.len()), values).expect("row shape");
        self.push(value, Op::GatherFlat(a, idx))
    }

    pub fn slice_cols(&mut self, a: Var, lo: usize, hi: usize) -> Var {
        let value = self.value(a).slice(s![.., lo..hi]).to_owned();
        self.push(value, Op::SliceCols(a, lo, hi))
    }

    pub fn concat_cols(&mut self, parts: Vec<Var>) -> Var {
        let views: Vec<_> = parts.iter().map(|&v| self.value(v).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("concat_cols rows must agree");
        self.push(value, Op::ConcatCols(parts))
    }

    pub fn concat_rows(&mut self, parts: Vec<Var>) -> Var {
        let views: Vec<_> = parts.iter().map(|&v| self.value(v).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("concat_rows cols must agree");
        self.push(value, Op::ConcatRows(parts))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(value, Op::SumAll(a))
    }

    /// `ln Σ exp` over the row-major positions `subset` of `a`.
    pub fn log_sum_exp(&mut self, a: Var, subset: Vec<usize>) -> Var {
        let src = self.value(a);
        let cols = src.ncols();
        let lse = log_sum_exp(subset.iter().map(|&k| src[[k / cols, k % cols]]));
        self.push(Array2::from_elem((1, 1), lse), Op::LogSumExp(a, subset))
    }

    /// Mean binary cross-entropy of sigmoid(`a`) against row-major `targets`.
    pub fn bce_with_logits(&mut self, a: Var, targets: Vec<f64>) -> Var {
        let src = self.value(a);
        assert_eq!(src.len(), targets.len(), "bce target count");
        let n = targets.len().max(1) as f64;
        let total: f64 = src
            .iter()
            .zip(&targets)
            .map(|(&x, &t)| x.max(0.0) - t * x + (-x.abs()).exp().ln_1p())
            .sum();
        self.push(Array2::from_elem((1, 1), total / n), Op::BceWithLogits(a, targets))
    }

    /// Propagates the seed gradients backwards and returns gradients for
    /// every node that received one.
    pub fn backward(&self, seeds: &[(Var, Array2<f64>)]) -> Gradients {
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        fn acc(slot: &mut Option<Array2<f64>>, g: Array2<f64>) {
            match slot {
                Some(s) => *s += &g,
                None => *slot = Some(g),
            }
        }
        for (v, g) in seeds {
            assert_eq!(self.value(*v).dim(), g.dim(), "seed gradient shape");
            acc(&mut grads[v.0], g.clone());
        }
        let last = seeds.iter().map(|(v, _)| v.0).max().map_or(0, |m| m + 1);
        for idx in (0..last).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input | Op::Param => {}
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut grads[a.0], ga);
                    acc(&mut grads[b.0], gb);
                }
                Op::Transpose(a) => acc(&mut grads[a.0], g.t().to_owned()),
                Op::Add(a, b) => {
                    acc(&mut grads[a.0], g.clone());
                    acc(&mut grads[b.0], g.clone());
                }
                Op::AddRow(a, row) => {
                    acc(&mut grads[row.0], g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads[a.0], g.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut grads[b.0], -&g);
                    acc(&mut grads[a.0], g.clone());
                }
                Op::Mul(a, b) => {
                    acc(&mut grads[a.0], &g * self.value(*b));
                    acc(&mut grads[b.0], &g * self.value(*a));
                }
                Op::Scale(a, c) => acc(&mut grads[a.0], &g * *c),
                Op::Dropout(a, mask) => acc(&mut grads[a.0], &g * mask),
                Op::Gelu(a) => {
                    let mut ga = g.clone();
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|gv, &x| *gv *= gelu_grad(x));
                    acc(&mut grads[a.0], ga);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    acc(&mut grads[beta.0], g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads[gamma.0], (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    let gxhat = &g * self.value(*gamma);
                    let d = xhat.ncols() as f64;
                    let mut gx = Array2::zeros(xhat.dim());
                    for (r, &is) in inv_std.iter().enumerate() {
                        let gh = gxhat.row(r);
                        let xh = xhat.row(r);
                        let mean_g = gh.sum() / d;
                        let mean_gx = gh.dot(&xh) / d;
                        gx.row_mut(r).assign(&((&gh - mean_g - &(&xh * mean_gx)) * is));
                    }
                    acc(&mut grads[x.0], gx);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = &g * y;
                    for (mut row, yr) in ga.rows_mut().into_iter().zip(y.rows()) {
                        let dot = row.sum();
                        row.zip_mut_with(&yr, |v, &yv| *v -= dot * yv);
                    }
                    acc(&mut grads[a.0], ga);
                }
                Op::GatherRows(a, idx) => {
                    let mut ga = Array2::zeros(self.value(*a).dim());
                    for (i, &r) in idx.iter().enumerate() {
                        let mut dst = ga.row_mut(r);
                        dst += &g.row(i);
                    }
                    acc(&mut grads[a.0], ga);
                }
                Op::GatherFlat(a, idx) => {
                    let dim = self.value(*a).dim();
                    let mut ga = Array2::zeros(dim);
                    for (i, &k) in idx.iter().enumerate() {
                        ga[[k / dim.1, k % dim.1]] += g[[0, i]];
                    }
                    acc(&mut grads[a.0], ga);
                }
                Op::SliceCols(a, lo, hi) => {
                    let mut ga = Array2::zeros(self.value(*a).dim());
                    ga.slice_mut(s![.., *lo..*hi]).assign(&g);
                    acc(&mut grads[a.0], ga);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        acc(&mut grads[p.0], g.slice(s![.., off..off + w]).to_owned());
                        off += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let h = self.value(*p).nrows();
                        acc(&mut grads[p.0], g.slice(s![off..off + h, ..]).to_owned());
                        off += h;
                    }
                }
                Op::SumAll(a) => {
                    acc(&mut grads[a.0], Array2::from_elem(self.value(*a).dim(), g[[0, 0]]));
                }
                Op::LogSumExp(a, subset) => {
                    let src = self.value(*a);
                    let cols = src.ncols();
                    let lse = node.value[[0, 0]];
                    let mut ga = Array2::zeros(src.dim());
                    for &k in subset {
                        let (r, c) = (k / cols, k % cols);
                        ga[[r, c]] += g[[0, 0]] * (src[[r, c]] - lse).exp();
                    }
                    acc(&mut grads[a.0], ga);
                }
                Op::BceWithLogits(a, targets) => {
                    let src = self.value(*a);
                    let n = targets.len().max(1) as f64;
                    let mut ga = Array2::zeros(src.dim());
                    for ((gv, &x), &t) in ga.iter_mut().zip(src.iter()).zip(targets) {
                        let sig = 1.0 / (1.0 + (-x).exp());
                        *gv = g[[0, 0]] * (sig - t) / n;
                    }
                    acc(&mut grads[a.0], ga);
                }
            }
            grads[idx] = Some(g);
        }
        let mut param_grads = GradStore::new(self.params);
        for (&id, &v) in &self.param_vars {
            if let Some(g) = &grads[v.0] {
                param_grads.accumulate(id, g);
            }
        }
        Gradients {
            nodes: grads,
            params: param_grads,
        }
    }

    /// Backward pass from a scalar node with unit seed.
    pub fn backward_scalar(&self, loss: Var) -> Gradients {
        self.backward(&[(loss, Array2::ones((1, 1)))])
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients {
    nodes: Vec<Option<Array2<f64>>>,
    pub params: GradStore,
}

impl Gradients {
    /// Gradient reaching node `v`, if any flowed there.
    pub fn node(&self, v: Var) -> Option<&Array2<f64>> {
        self.nodes[v.0].as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn random(shape: (usize, usize), rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_simple_fn(shape, || StandardNormal.sample(rng))
    }

    /// Compares backward gradients of `Σ w ∘ f(inputs)` with central differences.
    fn check<F>(inputs: Vec<Array2<f64>>, f: F)
    where
        F: Fn(&mut Graph, &[Var]) -> Var,
    {
        let store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let eval = |xs: &[Array2<f64>], w: Option<&Array2<f64>>| {
            let mut g = Graph::new(&store);
            let vars: Vec<Var> = xs.iter().map(|x| g.input(x.clone())).collect();
            let out = f(&mut g, &vars);
            let value = g.value(out).clone();
            let w = w.cloned().unwrap_or_else(|| Array2::ones(value.dim()));
            ((&value * &w).sum(), g, vars, out, w)
        };
        let (_, g0, _, out, _) = eval(&inputs, None);
        let w = random(g0.value(out).dim(), &mut rng);
        let (_, g, vars, out, w) = eval(&inputs, Some(&w));
        let grads = g.backward(&[(out, w.clone())]);
        let h = 1e-6;
        for (k, x) in inputs.iter().enumerate() {
            let analytic = grads.node(vars[k]).cloned().unwrap_or_else(|| Array2::zeros(x.dim()));
            for idx in 0..x.len() {
                let (r, c) = (idx / x.ncols(), idx % x.ncols());
                let mut plus = inputs.clone();
                plus[k][[r, c]] += h;
                let mut minus = inputs.clone();
                minus[k][[r, c]] -= h;
                let fd = (eval(&plus, Some(&w)).0 - eval(&minus, Some(&w)).0) / (2.0 * h);
                let an = analytic[[r, c]];
                let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                assert!(err < 1e-5, "input {k} entry ({r},{c}): fd {fd} vs analytic {an}");
            }
        }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn matmul_transpose_grad() {
        let mut r = rng();
        check(vec![random((3, 4), &mut r), random((2, 4), &mut r)], |g, v| {
            let bt = g.transpose(v[1]);
            g.matmul(v[0], bt)
        });
    }

    #[test]
    fn elementwise_grads() {
        let mut r = rng();
        check(
            vec![random((3, 2), &mut r), random((3, 2), &mut r), random((1, 2), &mut r)],
            |g, v| {
                let a = g.add(v[0], v[1]);
                let b = g.sub(a, v[1]);
                let c = g.mul(b, v[1]);
                let d = g.add_row(c, v[2]);
                let e = g.scale(d, -1.5);
                g.gelu(e)
            },
        );
    }

    #[test]
    fn layer_norm_grad() {
        let mut r = rng();
        check(
            vec![random((3, 5), &mut r), random((1, 5), &mut r), random((1, 5), &mut r)],
            |g, v| g.layer_norm(v[0], v[1], v[2]),
        );
    }

    #[test]
    fn softmax_grad() {
        let mut r = rng();
        check(vec![random((2, 4), &mut r)], |g, v| g.softmax_rows(v[0]));
    }

    #[test]
    fn gather_slice_concat_grads() {
        let mut r = rng();
        check(vec![random((4, 3), &mut r), random((2, 3), &mut r)], |g, v| {
            let a = g.gather_rows(v[0], vec![3, 0, 3]);
            let b = g.slice_cols(a, 1, 3);
            let c = g.slice_cols(v[1], 0, 2);
            let d = g.concat_rows(vec![b, c]);
            let e = g.concat_cols(vec![d, d]);
            let f = g.gather_flat(e, vec![0, 5, 5, 19]);
            let s = g.sum_all(v[0]);
            g.concat_cols(vec![f, s])
        });
    }

    #[test]
    fn lse_and_bce_grads() {
        let mut r = rng();
        check(vec![random((2, 3), &mut r)], |g, v| {
            let l = g.log_sum_exp(v[0], vec![0, 2, 4]);
            let b = g.bce_with_logits(v[0], vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.0]);
            g.concat_cols(vec![l, b])
        });
    }

    #[test]
    fn bce_at_zero_is_ln2() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.input(Array2::zeros((1, 4)));
        let l = g.bce_with_logits(x, vec![1.0, 0.0, 1.0, 0.0]);
        assert!((g.scalar(l) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn params_are_memoized_and_accumulate() {
        let mut store = ParamStore::new();
        let w = store.add("w", ParamGroup::Heads, Array2::from_elem((1, 1), 3.0));
        let mut g = Graph::new(&store);
        let a = g.param(w);
        let b = g.param(w);
        assert_eq!(a, b);
        let p = g.mul(a, b);
        let grads = g.backward_scalar(p);
        assert_eq!(grads.params.get(w).unwrap()[[0, 0]], 6.0);
    }

    #[test]
    fn dropout_is_identity_in_eval() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.input(Array2::ones((2, 2)));
        assert_eq!(g.dropout(x, 0.5), x);
        let mut t = Graph::training(&store, ChaCha8Rng::seed_from_u64(1));
        let x = t.input(Array2::ones((20, 20)));
        let y = t.dropout(x, 0.5);
        let v = t.value(y);
        assert!(v.iter().all(|&e| e == 0.0 || e == 2.0));
        assert!(v.iter().any(|&e| e == 0.0));
    }
}
