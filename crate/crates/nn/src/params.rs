use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};
use rand::Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub tensor: Tensor<T>,
    /// Whether AdamW applies weight decay to this parameter.
    pub decay: bool,
}

/// Owns every trainable tensor of a model, in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

/// Truncated normal (cut at two standard deviations).
pub fn trunc_normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize, std: f64) -> Vec<T> {
    let dist = Normal::new(0.0, std).expect("valid std");
    (0..n)
        .map(|_| loop {
            let v: f64 = dist.sample(rng);
            if v.abs() <= 2.0 * std {
                break T::lit(v);
            }
        })
        .collect()
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<T>, decay: bool) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            tensor,
            decay,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    /// Records every parameter as a leaf on `tape`; the returned handles are
    /// indexed by [`ParamId`].
    pub fn bind(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                tape.leaf(p.tensor.data().to_vec(), p.tensor.shape().to_vec())
                    .expect("parameter tensors are well formed")
            })
            .collect()
    }

    /// Gradients of the last backward pass, one buffer per parameter
    /// (zeros where the loss did not reach the parameter).
    pub fn collect_grads(&self, tape: &mut Tape<T>, vars: &[Var]) -> Vec<Vec<T>> {
        self.params
            .iter()
            .zip(vars)
            .map(|(p, v)| {
                tape.take_grad(*v)
                    .unwrap_or_else(|| vec![T::zero(); p.tensor.numel()])
            })
            .collect()
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(|p| p.tensor.zero_grad());
    }

    /// Adds per-parameter gradient buffers into the stored gradients.
    pub fn accumulate_grads(&mut self, grads: &[Vec<T>]) {
        for (p, g) in self.params.iter_mut().zip(grads) {
            p.tensor.accumulate_grad(g);
        }
    }

    /// Raw values of every parameter, for snapshot/restore.
    pub fn snapshot(&self) -> Vec<Vec<T>> {
        self.params.iter().map(|p| p.tensor.data().to_vec()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Vec<T>]) {
        for (p, s) in self.params.iter_mut().zip(snapshot) {
            p.tensor.data_mut().copy_from_slice(s);
        }
    }
}
