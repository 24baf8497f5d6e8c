//! GCN and GraphSAGE node encoders.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nn::{Activation, Linear};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{Bound, CsrMatrix, ParamSet, SparseOperator, Tape, Tensor, Var};

/// Graphs up to this size propagate with a dense matrix product.
pub const DENSE_PROPAGATION_LIMIT: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    Gcn,
    Sage,
}

impl EncoderKind {
    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::Gcn => "gcn",
            EncoderKind::Sage => "sage",
        }
    }
}

impl std::str::FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(EncoderKind::Gcn),
            "sage" | "graphsage" => Ok(EncoderKind::Sage),
            _ => Err(Error::Config(format!("unknown encoder {s:?} (expected gcn or sage)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub layers: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub activation: Activation,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Gcn,
            layers: 2,
            hidden: 64,
            dropout: 0.0,
            activation: Activation::Relu,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 {
            return Err(Error::Config("encoder needs at least one layer and one hidden unit".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PropagationMode {
    #[default]
    Auto,
    Dense,
    Sparse,
}

impl PropagationMode {
    pub fn name(self) -> &'static str {
        match self {
            PropagationMode::Auto => "auto",
            PropagationMode::Dense => "dense",
            PropagationMode::Sparse => "sparse",
        }
    }
}

impl std::str::FromStr for PropagationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(PropagationMode::Auto),
            "dense" => Ok(PropagationMode::Dense),
            "sparse" => Ok(PropagationMode::Sparse),
            _ => Err(Error::Config(format!("unknown propagation {s:?} (expected auto, dense or sparse)"))),
        }
    }
}

#[derive(Debug, Clone)]
enum Operator<S> {
    Dense(Tensor<S>),
    Sparse(Arc<SparseOperator<S>>),
}

impl<S: Scalar> Operator<S> {
    fn build(n: usize, triplets: Vec<(usize, usize, S)>, dense: bool) -> Self {
        let csr = CsrMatrix::from_triplets(n, n, triplets);
        if dense {
            Operator::Dense(csr.to_dense())
        } else {
            Operator::Sparse(Arc::new(SparseOperator::new(csr)))
        }
    }

    fn apply(&self, tape: &mut Tape<S>, h: Var) -> Result<Var> {
        match self {
            Operator::Dense(m) => {
                let m = tape.constant(m.clone());
                tape.matmul(m, h)
            }
            Operator::Sparse(m) => tape.spmm(Arc::clone(m), h),
        }
    }
}

/// Per-graph inputs to an encoder: the feature matrix and the fixed
/// propagation operator.
#[derive(Debug, Clone)]
pub struct GraphContext<S> {
    pub n: usize,
    pub features: Tensor<S>,
    kind: EncoderKind,
    op: Operator<S>,
}

impl<S: Scalar> GraphContext<S> {
    pub fn new(g: &Graph, kind: EncoderKind, mode: PropagationMode) -> Result<Self> {
        let n = g.n();
        if n == 0 {
            return Err(Error::Argument("cannot encode an empty graph".into()));
        }
        let dense = match mode {
            PropagationMode::Auto => n <= DENSE_PROPAGATION_LIMIT,
            PropagationMode::Dense => true,
            PropagationMode::Sparse => false,
        };
        let mut t = Vec::with_capacity(2 * g.num_edges() + n);
        match kind {
            EncoderKind::Gcn => {
                let inv: Vec<f64> = (0..n).map(|v| 1.0 / ((g.neighbors(v).len() + 1) as f64).sqrt()).collect();
                for v in 0..n {
                    t.push((v, v, S::lit(inv[v] * inv[v])));
                    for &w in g.neighbors(v) {
                        t.push((v, w, S::lit(inv[v] * inv[w])));
                    }
                }
            }
            EncoderKind::Sage => {
                for v in 0..n {
                    let nb = g.neighbors(v);
                    for &w in nb {
                        t.push((v, w, S::lit(1.0 / nb.len() as f64)));
                    }
                }
            }
        }
        let features = Tensor::new(
            vec![n, g.feature_dim()],
            g.features().iter().map(|&x| S::lit(x)).collect(),
        )?;
        Ok(Self {
            n,
            features,
            kind,
            op: Operator::build(n, t, dense),
        })
    }

    pub fn kind(&self) -> EncoderKind {
        self.kind
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }
}

/// Final-layer node representations.
#[derive(Debug, Clone)]
pub struct NodeEmbeddings<S> {
    pub matrix: Tensor<S>,
    pub config: EncoderConfig,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub in_dim: usize,
    layers: Vec<Linear>,
}

impl Encoder {
    pub fn new<S: Scalar>(
        ps: &mut ParamSet<S>,
        name: &str,
        config: EncoderConfig,
        in_dim: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::with_capacity(config.layers);
        let mut width = in_dim;
        for l in 0..config.layers {
            let fan_in = match config.kind {
                EncoderKind::Gcn => width,
                EncoderKind::Sage => 2 * width,
            };
            layers.push(Linear::new(ps, &format!("{name}.{l}"), fan_in, config.hidden, rng));
            width = config.hidden;
        }
        Ok(Self { config, in_dim, layers })
    }

    pub fn out_dim(&self) -> usize {
        self.config.hidden
    }

    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        p: &Bound,
        ctx: &GraphContext<S>,
        training: bool,
        rng: &mut Rng,
    ) -> Result<Var> {
        if ctx.kind != self.config.kind {
            return Err(Error::Argument(format!(
                "graph context built for {} used with a {} encoder",
                ctx.kind.name(),
                self.config.kind.name()
            )));
        }
        if ctx.feature_dim() != self.in_dim {
            return Err(Error::Shape(format!(
                "encoder expects {} input features, graph has {}",
                self.in_dim,
                ctx.feature_dim()
            )));
        }
        let mut h = tape.constant(ctx.features.clone());
        for (l, layer) in self.layers.iter().enumerate() {
            if l > 0 {
                h = tape.dropout(h, self.config.dropout, training, rng);
            }
            h = match self.config.kind {
                EncoderKind::Gcn => {
                    let agg = ctx.op.apply(tape, h)?;
                    layer.forward(tape, p, agg)?
                }
                EncoderKind::Sage => {
                    let nb = ctx.op.apply(tape, h)?;
                    let cat = tape.concat_cols(&[h, nb])?;
                    layer.forward(tape, p, cat)?
                }
            };
            if l + 1 < self.layers.len() {
                h = self.config.activation.apply(tape, h);
            }
        }
        Ok(h)
    }

    /// Inference-mode embeddings on a fresh tape.
    pub fn encode<S: Scalar>(&self, ps: &ParamSet<S>, ctx: &GraphContext<S>) -> Result<NodeEmbeddings<S>> {
        let mut tape = Tape::new();
        let p = ps.bind_frozen(&mut tape);
        let mut rng = crate::rng::stream(0, "unused");
        let h = self.forward(&mut tape, &p, ctx, false, &mut rng)?;
        Ok(NodeEmbeddings {
            matrix: tape.value(h).clone(),
            config: self.config,
        })
    }
}
