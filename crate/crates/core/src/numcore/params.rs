use std::cell::RefCell;
use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{Gradients, Graph, Tensor, Var};

/// Named parameter tensors, ordered by name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
}

pub type ParamGrads = BTreeMap<String, Tensor>;

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.params.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Contract(format!("missing parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count over all tensors.
    pub fn num_elements(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Copy of every parameter whose name starts with `prefix`.
    pub fn subset(&self, prefix: &str) -> ParamStore {
        let params = self
            .params
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        ParamStore { params }
    }

    /// Overwrites matching parameters from `other`, returning how many were
    /// replaced. Shapes must agree.
    pub fn overwrite_from(&mut self, other: &ParamStore) -> Result<usize> {
        let mut n = 0;
        for (name, value) in &other.params {
            if let Some(slot) = self.params.get_mut(name) {
                if slot.shape() != value.shape() {
                    return Err(Error::Checkpoint(format!(
                        "`{name}`: shape {:?} does not match {:?}",
                        value.shape(),
                        slot.shape()
                    )));
                }
                *slot = value.clone();
                n += 1;
            }
        }
        Ok(n)
    }
}

struct Dropout {
    rate: f64,
    rng: RefCell<ChaCha8Rng>,
}

/// Binds a [`ParamStore`] to a [`Graph`] for one forward pass. Each
/// parameter becomes a single leaf variable, created on first use.
pub struct Ctx<'g, 'p> {
    graph: &'g Graph,
    store: &'p ParamStore,
    vars: RefCell<BTreeMap<String, Var<'g>>>,
    dropout: Option<Dropout>,
}

impl<'g, 'p> Ctx<'g, 'p> {
    /// Inference binding: dropout disabled.
    pub fn new(graph: &'g Graph, store: &'p ParamStore) -> Self {
        Self { graph, store, vars: RefCell::default(), dropout: None }
    }

    /// Training binding with dropout at `rate`, seeded for reproducibility.
    pub fn training(graph: &'g Graph, store: &'p ParamStore, rate: f64, seed: u64) -> Self {
        let dropout = (rate > 0.0).then(|| Dropout {
            rate,
            rng: RefCell::new(ChaCha8Rng::seed_from_u64(seed)),
        });
        Self { graph, store, vars: RefCell::default(), dropout }
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn param(&self, name: &str) -> Result<Var<'g>> {
        if let Some(v) = self.vars.borrow().get(name) {
            return Ok(*v);
        }
        let v = self.graph.leaf(self.store.get(name)?.clone());
        self.vars.borrow_mut().insert(name.to_string(), v);
        Ok(v)
    }

    /// Binds `name` to an existing variable instead of a fresh leaf.
    pub fn bind_var(&self, name: &str, var: Var<'g>) {
        self.vars.borrow_mut().insert(name.to_string(), var);
    }

    pub fn constant(&self, t: Tensor) -> Var<'g> {
        self.graph.constant(t)
    }

    /// `(rate, seed)` for an op-internal dropout draw, if training.
    pub fn dropout_draw(&self) -> Option<(f64, u64)> {
        self.dropout.as_ref().map(|d| (d.rate, d.rng.borrow_mut().random()))
    }

    /// Inverted dropout on `x`; identity outside training.
    pub fn dropout(&self, x: Var<'g>) -> Result<Var<'g>> {
        let Some(d) = &self.dropout else { return Ok(x) };
        let keep = 1.0 - d.rate;
        let mask = {
            let mut rng = d.rng.borrow_mut();
            Tensor::from_fn(x.shape(), |_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
        };
        x.mul_const(mask)
    }

    /// Gradients of every parameter bound so far (zeros where none flowed).
    pub fn param_grads(&self, grads: &Gradients) -> ParamGrads {
        self.vars
            .borrow()
            .iter()
            .map(|(name, &var)| (name.clone(), grads.get_or_zeros(var)))
            .collect()
    }
}
