//! Sequence models over the node embeddings along a path.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::nn::{Linear, Mlp};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{Bound, ParamId, ParamSet, Tape, Tensor, Var};

/// Extra positions beyond the longest indexed path.
pub const POSITION_MARGIN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiKind {
    InjectiveSum,
    Recurrent,
    Attention,
    /// Mean instead of sum. Not injective on multisets; kept to show that the
    /// sum matters.
    Mean,
}

impl PhiKind {
    pub fn name(self) -> &'static str {
        match self {
            PhiKind::InjectiveSum => "injective_sum",
            PhiKind::Recurrent => "recurrent",
            PhiKind::Attention => "attention",
            PhiKind::Mean => "mean",
        }
    }
}

impl std::str::FromStr for PhiKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "injective_sum" | "sum" => Ok(PhiKind::InjectiveSum),
            "recurrent" | "lstm" => Ok(PhiKind::Recurrent),
            "attention" | "transformer" => Ok(PhiKind::Attention),
            "mean" => Ok(PhiKind::Mean),
            _ => Err(Error::Config(format!(
                "unknown phi {s:?} (expected injective_sum, recurrent or attention)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiConfig {
    pub kind: PhiKind,
    pub hidden: usize,
    pub heads: usize,
    pub layers: usize,
    /// Longest sequence the attention position table covers.
    pub max_len: usize,
}

impl Default for PhiConfig {
    fn default() -> Self {
        Self {
            kind: PhiKind::InjectiveSum,
            hidden: 64,
            heads: 4,
            layers: 1,
            max_len: 64,
        }
    }
}

impl PhiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.max_len == 0 {
            return Err(Error::Config("phi dimensions must be at least 1".into()));
        }
        if self.kind == PhiKind::Attention && (self.heads == 0 || !self.hidden.is_multiple_of(self.heads) || self.layers == 0) {
            return Err(Error::Config(format!(
                "attention phi needs layers >= 1 and hidden {} divisible by heads {}",
                self.hidden, self.heads
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Lstm {
    // input, forget, cell, output gates
    wx: [ParamId; 4],
    wh: [ParamId; 4],
    b: [ParamId; 4],
}

#[derive(Debug, Clone)]
struct Block {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    ln1: (ParamId, ParamId),
    ff1: Linear,
    ff2: Linear,
    ln2: (ParamId, ParamId),
}

#[derive(Debug, Clone)]
enum Body {
    Pool { inner: Linear, outer: Mlp },
    Lstm(Lstm),
    Transformer { input: Linear, blocks: Vec<Block> },
}

#[derive(Debug, Clone)]
pub struct Phi {
    pub config: PhiConfig,
    pub in_dim: usize,
    body: Body,
}

fn layer_norm_params<S: Scalar>(ps: &mut ParamSet<S>, name: &str, d: usize) -> (ParamId, ParamId) {
    (
        ps.add(format!("{name}.gamma"), Tensor::full(&[d], S::one())),
        ps.add(format!("{name}.beta"), Tensor::zeros(&[d])),
    )
}

/// Sinusoidal position table, `[max_len, d]`.
pub fn sinusoidal_table<S: Scalar>(max_len: usize, d: usize) -> Tensor<S> {
    let mut data = Vec::with_capacity(max_len * d);
    for pos in 0..max_len {
        for i in 0..d {
            let rate = 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = pos as f64 / rate;
            data.push(S::lit(if i % 2 == 0 { angle.sin() } else { angle.cos() }));
        }
    }
    Tensor::new(vec![max_len, d], data).expect("table shape")
}

/// `lin` applied to the rows of `x` selected by `idx`. Row-wise maps commute
/// with gathering, so the projection runs on whichever side has fewer rows.
fn project_rows<S: Scalar>(tape: &mut Tape<S>, p: &Bound, lin: &Linear, x: Var, idx: Vec<usize>) -> Result<Var> {
    if tape.value(x).rows() < idx.len() {
        let all = lin.forward(tape, p, x)?;
        tape.gather_rows(all, Arc::from(idx))
    } else {
        let rows = tape.gather_rows(x, Arc::from(idx))?;
        lin.forward(tape, p, rows)
    }
}

impl Phi {
    pub fn new<S: Scalar>(ps: &mut ParamSet<S>, name: &str, config: PhiConfig, in_dim: usize, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        let body = match config.kind {
            PhiKind::InjectiveSum | PhiKind::Mean => Body::Pool {
                inner: Linear::new(ps, &format!("{name}.in"), in_dim, h, rng),
                outer: Mlp::new(ps, &format!("{name}.out"), &[h, h, h], rng),
            },
            PhiKind::Recurrent => {
                let gates = ["i", "f", "g", "o"];
                let mk = |ps: &mut ParamSet<S>, rng: &mut Rng, part: &str, rows: usize| {
                    gates.map(|gname| {
                        ps.add(format!("{name}.{part}_{gname}"), Tensor::glorot(&[rows, h], rows, h, rng))
                    })
                };
                let wx = mk(ps, rng, "wx", in_dim);
                let wh = mk(ps, rng, "wh", h);
                let b = gates.map(|gname| {
                    // forget-gate bias starts at one so early gradients flow
                    let init = if gname == "f" { S::one() } else { S::zero() };
                    ps.add(format!("{name}.b_{gname}"), Tensor::full(&[h], init))
                });
                Body::Lstm(Lstm { wx, wh, b })
            }
            PhiKind::Attention => {
                let input = Linear::new(ps, &format!("{name}.proj"), in_dim, h, rng);
                let blocks = (0..config.layers)
                    .map(|l| {
                        let p = format!("{name}.block{l}");
                        Block {
                            q: Linear::new(ps, &format!("{p}.q"), h, h, rng),
                            k: Linear::new(ps, &format!("{p}.k"), h, h, rng),
                            v: Linear::new(ps, &format!("{p}.v"), h, h, rng),
                            o: Linear::new(ps, &format!("{p}.o"), h, h, rng),
                            ln1: layer_norm_params(ps, &format!("{p}.ln1"), h),
                            ff1: Linear::new(ps, &format!("{p}.ff1"), h, 2 * h, rng),
                            ff2: Linear::new(ps, &format!("{p}.ff2"), 2 * h, h, rng),
                            ln2: layer_norm_params(ps, &format!("{p}.ln2"), h),
                        }
                    })
                    .collect();
                Body::Transformer { input, blocks }
            }
        };
        Ok(Self { config, in_dim, body })
    }

    pub fn out_dim(&self) -> usize {
        self.config.hidden
    }

    /// Encodes each sequence of rows of `x` (given as row indices) to one
    /// `hidden`-wide vector. Returns `[seqs.len(), hidden]`.
    pub fn forward<S: Scalar>(&self, tape: &mut Tape<S>, p: &Bound, x: Var, seqs: &[Vec<usize>]) -> Result<Var> {
        if seqs.iter().any(Vec::is_empty) {
            return Err(Error::Argument("phi needs non-empty sequences".into()));
        }
        let b = seqs.len();
        match &self.body {
            Body::Pool { inner, outer } => {
                let flat: Vec<usize> = seqs.iter().flatten().copied().collect();
                let seg: Vec<Option<usize>> = seqs
                    .iter()
                    .enumerate()
                    .flat_map(|(i, s)| std::iter::repeat_n(Some(i), s.len()))
                    .collect();
                let h = project_rows(tape, p, inner, x, flat)?;
                let h = tape.relu(h);
                let pooled = if self.config.kind == PhiKind::Mean {
                    tape.segment_mean(h, Arc::from(seg), b)?
                } else {
                    tape.segment_sum(h, Arc::from(seg), b)?
                };
                outer.forward(tape, p, pooled)
            }
            Body::Lstm(cell) => self.lstm(cell, tape, p, x, seqs),
            Body::Transformer { input, blocks } => self.transformer(input, blocks, tape, p, x, seqs),
        }
    }

    fn lstm<S: Scalar>(&self, cell: &Lstm, tape: &mut Tape<S>, p: &Bound, x: Var, seqs: &[Vec<usize>]) -> Result<Var> {
        let b = seqs.len();
        let hd = self.config.hidden;
        let steps = seqs.iter().map(Vec::len).max().unwrap_or(0);
        let mut h = tape.constant(Tensor::zeros(&[b, hd]));
        let mut c = tape.constant(Tensor::zeros(&[b, hd]));
        let mut states = Vec::with_capacity(steps);
        // input projections per node, shared by every step, when that is cheaper
        let hoisted = if tape.value(x).rows() < b * steps {
            let mut pre = Vec::with_capacity(4);
            for k in 0..4 {
                let a = tape.matmul(x, p[cell.wx[k]])?;
                pre.push(tape.add(a, p[cell.b[k]])?);
            }
            Some(pre)
        } else {
            None
        };
        for t in 0..steps {
            // finished sequences keep stepping on a dummy row; their extra
            // states are never read
            let idx: Arc<[usize]> = seqs.iter().map(|s| s.get(t).copied().unwrap_or(s[0])).collect();
            let xt = match hoisted {
                Some(_) => None,
                None => Some(tape.gather_rows(x, Arc::clone(&idx))?),
            };
            let gate = |k: usize, tape: &mut Tape<S>| -> Result<Var> {
                let a = match (&hoisted, xt) {
                    (Some(pre), _) => tape.gather_rows(pre[k], Arc::clone(&idx))?,
                    (None, Some(xt)) => {
                        let a = tape.matmul(xt, p[cell.wx[k]])?;
                        tape.add(a, p[cell.b[k]])?
                    }
                    (None, None) => unreachable!(),
                };
                let r = tape.matmul(h, p[cell.wh[k]])?;
                tape.add(a, r)
            };
            let i = gate(0, tape)?;
            let f = gate(1, tape)?;
            let g = gate(2, tape)?;
            let o = gate(3, tape)?;
            let (i, f, g, o) = (tape.sigmoid(i), tape.sigmoid(f), tape.tanh(g), tape.sigmoid(o));
            let keep = tape.mul(f, c)?;
            let write = tape.mul(i, g)?;
            c = tape.add(keep, write)?;
            let tc = tape.tanh(c);
            h = tape.mul(o, tc)?;
            states.push(h);
        }
        let all = tape.concat_rows(&states)?;
        let last: Vec<usize> = seqs.iter().enumerate().map(|(i, s)| (s.len() - 1) * b + i).collect();
        tape.gather_rows(all, Arc::from(last))
    }

    fn layer_norm<S: Scalar>(tape: &mut Tape<S>, p: &Bound, x: Var, ln: (ParamId, ParamId)) -> Result<Var> {
        let n = tape.layer_norm(x)?;
        let s = tape.mul(n, p[ln.0])?;
        tape.add(s, p[ln.1])
    }

    fn transformer<S: Scalar>(
        &self,
        input: &Linear,
        blocks: &[Block],
        tape: &mut Tape<S>,
        p: &Bound,
        x: Var,
        seqs: &[Vec<usize>],
    ) -> Result<Var> {
        let b = seqs.len();
        let hd = self.config.hidden;
        let lmax = seqs.iter().map(Vec::len).max().unwrap_or(0);
        if lmax > self.config.max_len {
            return Err(Error::Argument(format!(
                "path of {lmax} nodes exceeds the attention position table ({} positions)",
                self.config.max_len
            )));
        }
        let mut idx = Vec::with_capacity(b * lmax);
        let mut seg = Vec::with_capacity(b * lmax);
        for (i, s) in seqs.iter().enumerate() {
            for t in 0..lmax {
                idx.push(s.get(t).copied().unwrap_or(s[0]));
                seg.push((t < s.len()).then_some(i));
            }
        }
        let table = sinusoidal_table::<S>(lmax, hd);
        let mut pe = Vec::with_capacity(b * lmax * hd);
        for _ in 0..b {
            pe.extend_from_slice(table.data());
        }
        let lengths: Arc<[usize]> = seqs.iter().map(Vec::len).collect();
        let proj = project_rows(tape, p, input, x, idx)?;
        let pe = tape.constant(Tensor::new(vec![b * lmax, hd], pe)?);
        let mut h = tape.add(proj, pe)?;
        for blk in blocks {
            let q = blk.q.forward(tape, p, h)?;
            let k = blk.k.forward(tape, p, h)?;
            let v = blk.v.forward(tape, p, h)?;
            let a = tape.attention(q, k, v, self.config.heads, lmax, Arc::clone(&lengths))?;
            let a = blk.o.forward(tape, p, a)?;
            let r = tape.add(h, a)?;
            h = Self::layer_norm(tape, p, r, blk.ln1)?;
            let f = blk.ff1.forward(tape, p, h)?;
            let f = tape.relu(f);
            let f = blk.ff2.forward(tape, p, f)?;
            let r = tape.add(h, f)?;
            h = Self::layer_norm(tape, p, r, blk.ln2)?;
        }
        tape.segment_mean(h, Arc::from(seg), b)
    }
}
