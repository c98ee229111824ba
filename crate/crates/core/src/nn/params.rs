use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::tensor::Matrix;

/// A trainable tensor with its Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Matrix,
    pub m: Matrix,
    pub v: Matrix,
    pub step: u64,
}

impl Param {
    pub fn new(value: Matrix) -> Self {
        let (r, c) = value.shape();
        Param {
            value,
            m: Matrix::zeros(r, c),
            v: Matrix::zeros(r, c),
            step: 0,
        }
    }
}

/// Named parameters in name order, plus the seed they were initialised from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
    seed: u64,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        ParamStore {
            params: BTreeMap::new(),
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) {
        self.params.insert(name.into(), Param::new(value));
    }

    pub fn insert_param(&mut self, name: impl Into<String>, param: Param) {
        self.params.insert(name.into(), param);
    }

    /// Uniform Glorot initialisation, `±sqrt(6 / (fan_in + fan_out))`.
    pub fn insert_glorot(
        &mut self,
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut impl Rng,
    ) {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = Matrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-bound..=bound));
        self.insert(name, w);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.get_mut(name)
    }

    /// Parameter value by name. Panics if absent: model code only asks for
    /// names it registered itself.
    pub fn value(&self, name: &str) -> &Matrix {
        match self.params.get(name) {
            Some(p) => &p.value,
            None => panic!("parameter `{name}` not registered"),
        }
    }

    pub fn value_mut(&mut self, name: &str) -> &mut Matrix {
        match self.params.get_mut(name) {
            Some(p) => &mut p.value,
            None => panic!("parameter `{name}` not registered"),
        }
    }

    pub fn try_value(&self, name: &str) -> Result<&Matrix> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param)> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }
}

/// Gradients keyed by parameter name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients(BTreeMap<String, Matrix>);

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, grad: Matrix) {
        self.0.insert(name.into(), grad);
    }

    /// Adds into an existing entry, or inserts.
    pub fn accumulate(&mut self, name: &str, grad: Matrix) {
        match self.0.get_mut(name) {
            Some(g) => g.add_assign(&grad),
            None => {
                self.0.insert(name.to_string(), grad);
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.0.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Matrix)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}
