//! Dense layers shared by the encoders and link scorers.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{Bound, ParamId, ParamSet, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn apply<S: Scalar>(self, tape: &mut Tape<S>, x: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            _ => Err(Error::Config(format!("unknown activation {s:?} (expected relu or tanh)"))),
        }
    }
}

/// `x W + b` with Glorot-initialised `W` and zero `b`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<S: Scalar>(ps: &mut ParamSet<S>, name: &str, in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let w = ps.add(format!("{name}.w"), Tensor::glorot(&[in_dim, out_dim], in_dim, out_dim, rng));
        let b = ps.add(format!("{name}.b"), Tensor::zeros(&[out_dim]));
        Self { w, b, in_dim, out_dim }
    }

    pub fn forward<S: Scalar>(&self, tape: &mut Tape<S>, p: &Bound, x: Var) -> Result<Var> {
        let y = tape.matmul(x, p[self.w])?;
        tape.add(y, p[self.b])
    }
}

/// Stack of linear layers with an activation between consecutive layers and
/// none after the last.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Mlp {
    /// `dims` lists the input width followed by each layer's output width.
    pub fn new<S: Scalar>(ps: &mut ParamSet<S>, name: &str, dims: &[usize], rng: &mut Rng) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least one layer");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(ps, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Self {
            layers,
            activation: Activation::Relu,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn forward<S: Scalar>(&self, tape: &mut Tape<S>, p: &Bound, mut x: Var) -> Result<Var> {
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(tape, p, x)?;
            if i + 1 < self.layers.len() {
                x = self.activation.apply(tape, x);
            }
        }
        Ok(x)
    }
}
