//! Named parameter tensors and their gradient accumulators.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Optimizer group a parameter belongs to; groups get separate learning rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamGroup {
    Encoder,
    Heads,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub group: ParamGroup,
    pub value: Array2<f64>,
}

/// Flat registry of every trainable tensor. Vectors are stored as `1 × n`.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    by_name: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor. Panics if the name is already taken.
    pub fn add(&mut self, name: impl Into<String>, group: ParamGroup, value: Array2<f64>) -> ParamId {
        let name = name.into();
        let id = ParamId(self.entries.len());
        let prev = self.by_name.insert(name.clone(), id);
        assert!(prev.is_none(), "duplicate parameter {name}");
        self.entries.push(ParamEntry { name, group, value });
        id
    }

    /// Registers a tensor drawn from N(0, std²).
    pub fn add_normal<R: Rng>(
        &mut self,
        name: impl Into<String>,
        group: ParamGroup,
        shape: (usize, usize),
        std: f64,
        rng: &mut R,
    ) -> ParamId {
        let normal = Normal::new(0.0, std).expect("finite std");
        let value = Array2::from_shape_simple_fn(shape, || normal.sample(rng));
        self.add(name, group, value)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, group: ParamGroup, shape: (usize, usize)) -> ParamId {
        self.add(name, group, Array2::zeros(shape))
    }

    pub fn add_ones(&mut self, name: impl Into<String>, group: ParamGroup, shape: (usize, usize)) -> ParamId {
        self.add(name, group, Array2::ones(shape))
    }

    pub fn get(&self, id: ParamId) -> &Array2<f64> {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.entries[id.0].value
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }
}

/// Per-parameter gradient sums, indexed like the owning [`ParamStore`].
#[derive(Debug, Clone)]
pub struct GradStore {
    grads: Vec<Option<Array2<f64>>>,
}

impl GradStore {
    pub fn new(params: &ParamStore) -> Self {
        GradStore {
            grads: vec![None; params.len()],
        }
    }

    pub fn accumulate(&mut self, id: ParamId, grad: &Array2<f64>) {
        match &mut self.grads[id.0] {
            Some(g) => *g += grad,
            slot => *slot = Some(grad.clone()),
        }
    }

    /// Adds every gradient of `other` into `self`.
    pub fn merge(&mut self, other: &GradStore) {
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                self.accumulate(ParamId(i), g);
            }
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Array2<f64>> {
        self.grads[id.0].as_ref()
    }

    /// Euclidean norm over the gradients of parameters in `group`.
    pub fn group_norm(&self, params: &ParamStore, group: ParamGroup) -> f64 {
        self.grads
            .iter()
            .enumerate()
            .filter(|(i, _)| params.entries[*i].group == group)
            .filter_map(|(_, g)| g.as_ref())
            .map(|g| g.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().flatten().all(|g| g.iter().all(|v| v.is_finite()))
    }
}
