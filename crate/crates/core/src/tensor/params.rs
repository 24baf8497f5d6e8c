use std::ops::Index;

use super::tape::{Gradients, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named trainable tensor and its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param<S> {
    pub name: String,
    pub value: Tensor<S>,
    pub grad: Option<Tensor<S>>,
}

#[derive(Debug, Clone, Default)]
pub struct ParamSet<S> {
    params: Vec<Param<S>>,
}

/// Tape handles for every parameter of a set, valid for one forward pass.
#[derive(Debug, Clone)]
pub struct Bound(Vec<Var>);

impl Index<ParamId> for Bound {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.0[id.0]
    }
}

impl<S: Scalar> ParamSet<S> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<S>) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            value,
            grad: None,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<S> {
        &self.params[id.0].value
    }

    pub fn params(&self) -> &[Param<S>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<S>] {
        &mut self.params
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Puts every parameter on the tape as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape<S>) -> Bound {
        Bound(self.params.iter().map(|p| tape.leaf(p.value.clone())).collect())
    }

    /// Puts every parameter on the tape as a constant (inference).
    pub fn bind_frozen(&self, tape: &mut Tape<S>) -> Bound {
        Bound(self.params.iter().map(|p| tape.constant(p.value.clone())).collect())
    }

    /// Adds the gradients of a backward pass into each parameter's `grad`.
    pub fn accumulate(&mut self, bound: &Bound, grads: &mut Gradients<S>) {
        for (p, &v) in self.params.iter_mut().zip(&bound.0) {
            let Some(g) = grads.take(v) else { continue };
            match &mut p.grad {
                Some(acc) => {
                    for (a, x) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a += *x;
                    }
                }
                slot @ None => *slot = Some(g),
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// All values concatenated in registration order.
    pub fn flatten(&self) -> Vec<S> {
        self.params.iter().flat_map(|p| p.value.data().iter().copied()).collect()
    }

    /// All gradients concatenated; missing gradients read as zero.
    pub fn flatten_grads(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for p in &self.params {
            match &p.grad {
                Some(g) => out.extend_from_slice(g.data()),
                None => out.extend(std::iter::repeat_n(S::zero(), p.value.numel())),
            }
        }
        out
    }

    pub fn unflatten(&mut self, flat: &[S]) -> Result<()> {
        if flat.len() != self.num_scalars() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.num_scalars()
            )));
        }
        let mut off = 0;
        for p in &mut self.params {
            let n = p.value.numel();
            p.value.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Replaces values from `(name, tensor)` pairs, which must match this set
    /// name for name and shape for shape.
    pub fn load(&mut self, entries: Vec<(String, Tensor<S>)>) -> Result<()> {
        if entries.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, model has {}",
                entries.len(),
                self.params.len()
            )));
        }
        for (p, (name, t)) in self.params.iter_mut().zip(entries) {
            if p.name != name || p.value.shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} {:?} does not match model tensor {} {:?}",
                    t.shape(),
                    p.name,
                    p.value.shape()
                )));
            }
            p.value = t;
            p.grad = None;
        }
        Ok(())
    }
}
