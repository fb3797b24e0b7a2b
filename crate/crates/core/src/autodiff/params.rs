use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

use super::graph::{Graph, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Option<Tensor<T>>,
}

/// Named trainable tensors, iterated in name order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    records: BTreeMap<String, Param<T>>,
    rng_seed: u64,
}

impl<T: Real> ParamStore<T> {
    pub fn new(rng_seed: u64) -> Self {
        Self { records: BTreeMap::new(), rng_seed }
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.records.contains_key(&name) {
            return Err(Error::config(format!("duplicate parameter {name}")));
        }
        self.records.insert(name, Param { value, grad: None });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.records.get(name).map(|p| &p.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.records.get_mut(name).map(|p| &mut p.value)
    }

    pub fn param(&self, name: &str) -> Option<&Param<T>> {
        self.records.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.records.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.records.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param<T>)> {
        self.records.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count_params(&self) -> usize {
        self.records.values().map(|p| p.value.numel()).sum()
    }

    /// Records every parameter on `graph` as a differentiable leaf.
    pub fn bind(&self, graph: &mut Graph<T>) -> BoundParams {
        self.bind_with(graph, true)
    }

    /// Records every parameter as a constant (inference only).
    pub fn bind_frozen(&self, graph: &mut Graph<T>) -> BoundParams {
        self.bind_with(graph, false)
    }

    fn bind_with(&self, graph: &mut Graph<T>, requires_grad: bool) -> BoundParams {
        let vars = self
            .records
            .iter()
            .map(|(name, p)| (name.clone(), graph.leaf(p.value.clone(), requires_grad)))
            .collect();
        BoundParams { vars }
    }

    /// Copies gradients out of a differentiated graph; parameters the loss
    /// does not reach receive zeros.
    pub fn collect_grads(&mut self, graph: &Graph<T>, bound: &BoundParams) {
        for (name, p) in self.records.iter_mut() {
            let grad = bound
                .vars
                .get(name)
                .and_then(|&v| graph.grad(v))
                .unwrap_or_else(|| Tensor::zeros(p.value.shape()));
            p.grad = Some(grad);
        }
    }

    pub fn zero_grads(&mut self) {
        self.records.values_mut().for_each(|p| p.grad = None);
    }

    pub fn grad_norm(&self) -> f64 {
        self.records
            .values()
            .filter_map(|p| p.grad.as_ref())
            .flat_map(|g| g.data().iter())
            .map(|v| v.as_f64() * v.as_f64())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales all gradients so their global L2 norm is at most `max_norm`;
    /// returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let s = T::lit(max_norm / norm);
            for g in self.records.values_mut().filter_map(|p| p.grad.as_mut()) {
                g.data_mut().iter_mut().for_each(|v| *v *= s);
            }
        }
        norm
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            records: self
                .records
                .iter()
                .map(|(k, p)| (k.clone(), Param { value: p.value.cast(), grad: p.grad.as_ref().map(|g| g.cast()) }))
                .collect(),
            rng_seed: self.rng_seed,
        }
    }
}

/// Graph handles for a bound [`ParamStore`].
#[derive(Clone, Debug, Default)]
pub struct BoundParams {
    vars: BTreeMap<String, Var>,
}

impl BoundParams {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars.get(name).copied().ok_or_else(|| Error::config(format!("missing parameter {name}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.vars.contains_key(name)
    }
}

/// Normal samples with standard deviation `std`, redrawn outside ±2σ.
pub fn init_truncated_normal<T: Real, R: Rng>(rng: &mut R, shape: &[usize], std: f64) -> Tensor<T> {
    let numel: usize = shape.iter().product();
    let data = (0..numel)
        .map(|_| loop {
            let z: f64 = rng.sample(StandardNormal);
            if z.abs() <= 2.0 {
                break T::lit(z * std);
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

/// Initialization rule for one parameter record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Truncated normal with `std = fan_in^-1/2`.
    FanIn(usize),
    Zeros,
    Constant(f64),
}

/// Declared shape and initialization of a named parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, init: Init) -> Self {
        Self { name: name.into(), shape, init }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

impl<T: Real> ParamStore<T> {
    /// Materializes `specs` in order from the init stream of `seed`.
    pub fn from_specs(specs: &[ParamSpec], seed: u64) -> Result<Self> {
        let mut rng = crate::rng::stream(seed, crate::rng::INIT_STREAM);
        let mut store = Self::new(seed);
        for spec in specs {
            let value = match spec.init {
                Init::FanIn(fan_in) => init_truncated_normal(&mut rng, &spec.shape, (fan_in as f64).powf(-0.5)),
                Init::Zeros => Tensor::zeros(&spec.shape),
                Init::Constant(c) => Tensor::filled(&spec.shape, T::lit(c)),
            };
            store.insert(spec.name.clone(), value)?;
        }
        Ok(store)
    }
}
