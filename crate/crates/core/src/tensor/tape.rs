//! Reverse-mode automatic differentiation on a linear tape.
//!
//! Every op appends one node holding its forward value. `backward` walks the
//! nodes in reverse, accumulating adjoints, and returns the gradient of every
//! trainable leaf. The tape is cleared afterwards so it can be reused for the
//! next step.

use std::sync::Arc;

use rand::Rng as _;

use super::tensor::{SparseOperator, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Debug)]
enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, S),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    Gather(Var, Arc<[usize]>),
    Segment {
        x: Var,
        segment: Arc<[Option<usize>]>,
        weight: Vec<S>,
    },
    SumAll(Var),
    SumAxis(Var, usize),
    Dropout(Var, Vec<S>),
    SpMM(Arc<SparseOperator<S>>, Var),
    Transpose(Var),
    LayerNorm {
        x: Var,
        normed: Vec<S>,
        inv_std: Vec<S>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        max_len: usize,
        lengths: Arc<[usize]>,
        probs: Vec<S>,
    },
    Bce(Var, Arc<[S]>),
}

#[derive(Debug)]
struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by leaf handle.
#[derive(Debug)]
pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, v: Var) -> Option<&Tensor<S>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<S>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

#[derive(Debug, Default)]
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

fn shape_err<T>(msg: String) -> Result<T> {
    Err(Error::Shape(msg))
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, requires_grad: bool) -> Var {
        debug_assert!(value.is_finite(), "non-finite value produced by {op:?}");
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Trainable input.
    pub fn leaf(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn dims2(&self, v: Var) -> Result<(usize, usize)> {
        let t = self.value(v);
        match t.shape() {
            [r, c] => Ok((*r, *c)),
            s => shape_err(format!("expected a matrix, got shape {s:?}")),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a)?;
        let (k2, n) = self.dims2(b)?;
        if k != k2 {
            return shape_err(format!("matmul [{m},{k}] x [{k2},{n}]"));
        }
        let mut out = vec![S::zero(); m * n];
        matmul_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg))
    }

    fn broadcast_check(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return shape_err(format!("{what}: cannot broadcast {sb:?} onto {sa:?}"));
        }
        Ok(())
    }

    fn zip_broadcast(&mut self, a: Var, b: Var, f: impl Fn(S, S) -> S, op: Op<S>, what: &str) -> Result<Var> {
        self.broadcast_check(a, b, what)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let bl = tb.numel();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, tb.data()[i % bl]))
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, op, rg))
    }

    /// `a + b`, where `b`'s shape must be a suffix of `a`'s.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_broadcast(a, b, |x, y| x + y, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_broadcast(a, b, |x, y| x - y, Op::Sub(a, b), "sub")
    }

    /// Elementwise product with suffix broadcasting of `b`.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_broadcast(a, b, |x, y| x * y, Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, a: Var, c: S) -> Var {
        let v = self.value(a).map(|x| x * c);
        let rg = self.rg(&[a]);
        self.push(v, Op::Scale(a, c), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > S::zero() { x } else { S::zero() });
        let rg = self.rg(&[a]);
        self.push(v, Op::Relu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        let rg = self.rg(&[a]);
        self.push(v, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(S::tanh);
        let rg = self.rg(&[a]);
        self.push(v, Op::Tanh(a), rg)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let w = *t.shape().last().unwrap_or(&1);
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(w.max(1)) {
            let m = row.iter().copied().fold(S::neg_infinity(), S::max);
            let mut z = S::zero();
            for x in row.iter_mut() {
                *x = (*x - m).exp();
                z += *x;
            }
            for x in row.iter_mut() {
                *x /= z;
            }
        }
        let value = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(&[a]);
        self.push(value, Op::Softmax(a), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return shape_err("concat of nothing".into());
        }
        let rows = self.dims2(parts[0])?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.dims2(p)?;
            if r != rows {
                return shape_err(format!("concat_cols: {r} rows vs {rows}"));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(Tensor::new(vec![rows, total], out)?, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return shape_err("concat of nothing".into());
        }
        let cols = self.dims2(parts[0])?.1;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, c) = self.dims2(p)?;
            if c != cols {
                return shape_err(format!("concat_rows: {c} cols vs {cols}"));
            }
            rows += r;
            out.extend_from_slice(self.value(p).data());
        }
        let rg = self.rg(parts);
        Ok(self.push(Tensor::new(vec![rows, cols], out)?, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.dims2(a)?;
        if start > end || end > r {
            return shape_err(format!("slice {start}..{end} of {r} rows"));
        }
        let data = self.value(a).data()[start * c..end * c].to_vec();
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::new(vec![end - start, c], data)?, Op::SliceRows(a, start), rg))
    }

    /// Row gather (embedding lookup): output row `i` is row `index[i]` of `a`.
    pub fn gather_rows(&mut self, a: Var, index: Arc<[usize]>) -> Result<Var> {
        let (r, c) = self.dims2(a)?;
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(index.len() * c);
        for &i in index.iter() {
            if i >= r {
                return shape_err(format!("gather index {i} out of {r} rows"));
            }
            out.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::new(vec![index.len(), c], out)?, Op::Gather(a, index), rg))
    }

    fn segment_weighted(
        &mut self,
        a: Var,
        segment: Arc<[Option<usize>]>,
        num_segments: usize,
        weight: Vec<S>,
    ) -> Result<Var> {
        let (r, c) = self.dims2(a)?;
        if segment.len() != r {
            return shape_err(format!("{} segment ids for {r} rows", segment.len()));
        }
        let src = self.value(a).data();
        let mut out = vec![S::zero(); num_segments * c];
        for (i, s) in segment.iter().enumerate() {
            let Some(s) = *s else { continue };
            if s >= num_segments {
                return shape_err(format!("segment {s} out of {num_segments}"));
            }
            let w = weight[i];
            for (o, &x) in out[s * c..(s + 1) * c].iter_mut().zip(&src[i * c..(i + 1) * c]) {
                *o += w * x;
            }
        }
        let rg = self.rg(&[a]);
        Ok(self.push(
            Tensor::new(vec![num_segments, c], out)?,
            Op::Segment { x: a, segment, weight },
            rg,
        ))
    }

    /// Sums rows into `num_segments` buckets; rows with `None` are dropped.
    pub fn segment_sum(&mut self, a: Var, segment: Arc<[Option<usize>]>, num_segments: usize) -> Result<Var> {
        let w = vec![S::one(); segment.len()];
        self.segment_weighted(a, segment, num_segments, w)
    }

    /// Per-segment mean; empty segments produce zero rows.
    pub fn segment_mean(&mut self, a: Var, segment: Arc<[Option<usize>]>, num_segments: usize) -> Result<Var> {
        let mut count = vec![0usize; num_segments];
        for s in segment.iter().flatten() {
            if *s < num_segments {
                count[*s] += 1;
            }
        }
        let w = segment
            .iter()
            .map(|s| match s {
                Some(s) if *s < num_segments => S::one() / S::lit(count[*s] as f64),
                _ => S::zero(),
            })
            .collect();
        self.segment_weighted(a, segment, num_segments, w)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: S = self.value(a).data().iter().copied().sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::SumAll(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).numel().max(1);
        let s = self.sum(a);
        self.scale(s, S::one() / S::lit(n as f64))
    }

    /// Sum of a matrix over `axis` (0 collapses rows, 1 collapses columns).
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let (r, c) = self.dims2(a)?;
        let src = self.value(a).data();
        let value = match axis {
            0 => {
                let mut out = vec![S::zero(); c];
                for row in src.chunks(c.max(1)) {
                    for (o, &x) in out.iter_mut().zip(row) {
                        *o += x;
                    }
                }
                Tensor::new(vec![c], out)?
            }
            1 => Tensor::new(vec![r], src.chunks(c.max(1)).map(|row| row.iter().copied().sum()).collect())?,
            _ => return shape_err(format!("axis {axis} of a matrix")),
        };
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::SumAxis(a, axis), rg))
    }

    /// Inverted dropout; the identity when `training` is false or `p == 0`.
    pub fn dropout(&mut self, a: Var, p: f64, training: bool, rng: &mut Rng) -> Var {
        if !training || p <= 0.0 {
            return a;
        }
        let keep = S::lit(1.0 / (1.0 - p));
        let mask: Vec<S> = (0..self.value(a).numel())
            .map(|_| if rng.gen::<f64>() < p { S::zero() } else { keep })
            .collect();
        let t = self.value(a);
        let data = t.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        let value = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(&[a]);
        self.push(value, Op::Dropout(a, mask), rg)
    }

    /// `M · a` for a constant sparse `M`.
    pub fn spmm(&mut self, m: Arc<SparseOperator<S>>, a: Var) -> Result<Var> {
        let (r, c) = self.dims2(a)?;
        if m.forward.cols != r {
            return shape_err(format!("spmm [{}x{}] x [{r},{c}]", m.forward.rows, m.forward.cols));
        }
        let mut out = vec![S::zero(); m.forward.rows * c];
        m.forward.matmul_into(self.value(a).data(), c, &mut out);
        let rows = m.forward.rows;
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::new(vec![rows, c], out)?, Op::SpMM(m, a), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims2(a)?;
        let src = self.value(a).data();
        let mut out = vec![S::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::new(vec![c, r], out)?, Op::Transpose(a), rg))
    }

    /// Normalises each row to zero mean and unit variance. Affine parameters,
    /// if wanted, are applied separately with `mul` and `add`.
    pub fn layer_norm(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims2(a)?;
        let eps = S::lit(1e-5);
        let src = self.value(a).data();
        let mut normed = vec![S::zero(); r * c];
        let mut inv_std = vec![S::zero(); r];
        let cn = S::lit(c as f64);
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            let mean = row.iter().copied().sum::<S>() / cn;
            let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<S>() / cn;
            let is = S::one() / (var + eps).sqrt();
            inv_std[i] = is;
            for j in 0..c {
                normed[i * c + j] = (row[j] - mean) * is;
            }
        }
        let value = Tensor::new(vec![r, c], normed.clone())?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::LayerNorm { x: a, normed, inv_std }, rg))
    }

    /// Multi-head scaled dot-product self-attention over a padded batch.
    ///
    /// `q`, `k`, `v` are `[B * max_len, D]` with sequence `b` occupying rows
    /// `b * max_len .. b * max_len + lengths[b]`. Keys past a sequence's length
    /// are masked out; output rows past the length are zero.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        max_len: usize,
        lengths: Arc<[usize]>,
    ) -> Result<Var> {
        let (rows, d) = self.dims2(q)?;
        if self.dims2(k)? != (rows, d) || self.dims2(v)? != (rows, d) {
            return shape_err("attention q, k, v must share a shape".into());
        }
        if heads == 0 || d % heads != 0 {
            return shape_err(format!("{d} columns do not split into {heads} heads"));
        }
        let batch = lengths.len();
        if batch * max_len != rows || lengths.iter().any(|&l| l > max_len) {
            return shape_err(format!("{batch} sequences of at most {max_len} in {rows} rows"));
        }
        let dh = d / heads;
        let scale = S::one() / S::lit(dh as f64).sqrt();
        let (qd, kd, vd) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let mut out = vec![S::zero(); rows * d];
        let mut probs = vec![S::zero(); batch * heads * max_len * max_len];
        for b in 0..batch {
            let len = lengths[b];
            let base = b * max_len;
            for h in 0..heads {
                let off = h * dh;
                for i in 0..len {
                    let p = &mut probs[((b * heads + h) * max_len + i) * max_len..][..max_len];
                    let qi = &qd[(base + i) * d + off..][..dh];
                    let mut m = S::neg_infinity();
                    for j in 0..len {
                        let kj = &kd[(base + j) * d + off..][..dh];
                        let s = qi.iter().zip(kj).map(|(&x, &y)| x * y).sum::<S>() * scale;
                        p[j] = s;
                        m = m.max(s);
                    }
                    let mut z = S::zero();
                    for pj in p[..len].iter_mut() {
                        *pj = (*pj - m).exp();
                        z += *pj;
                    }
                    let o = &mut out[(base + i) * d + off..][..dh];
                    for j in 0..len {
                        p[j] /= z;
                        let vj = &vd[(base + j) * d + off..][..dh];
                        for (oc, &vc) in o.iter_mut().zip(vj) {
                            *oc += p[j] * vc;
                        }
                    }
                }
            }
        }
        let rg = self.rg(&[q, k, v]);
        Ok(self.push(
            Tensor::new(vec![rows, d], out)?,
            Op::Attention {
                q,
                k,
                v,
                heads,
                max_len,
                lengths,
                probs,
            },
            rg,
        ))
    }

    /// Mean binary cross-entropy of `logits` against 0/1 `targets`, computed
    /// in the numerically stable `max(x,0) - x·y + log(1 + e^{-|x|})` form.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Arc<[S]>) -> Result<Var> {
        let t = self.value(logits);
        if t.numel() != targets.len() {
            return shape_err(format!("{} logits for {} targets", t.numel(), targets.len()));
        }
        let n = S::lit(targets.len().max(1) as f64);
        let loss: S = t
            .data()
            .iter()
            .zip(targets.iter())
            .map(|(&x, &y)| x.max(S::zero()) - x * y + (-x.abs()).exp().ln_1p())
            .sum::<S>()
            / n;
        let rg = self.rg(&[logits]);
        Ok(self.push(Tensor::scalar(loss), Op::Bce(logits, targets), rg))
    }

    /// Back-propagates from the scalar `loss` and clears the tape.
    ///
    /// Every trainable leaf gets an entry; leaves the loss does not depend on
    /// receive zeros.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<S>> {
        if self.value(loss).numel() != 1 {
            return shape_err(format!("backward needs a scalar loss, got {:?}", self.value(loss).shape()));
        }
        let count = self.nodes.len();
        let mut adj: Vec<Option<Vec<S>>> = (0..count).map(|_| None).collect();
        adj[loss.0] = Some(vec![S::one()]);
        let mut out: Vec<Option<Tensor<S>>> = (0..count).map(|_| None).collect();

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = adj[i].take() else {
                if matches!(node.op, Op::Leaf) {
                    out[i] = Some(Tensor::zeros(node.value.shape()));
                }
                continue;
            };
            self.propagate(i, g, &mut adj, &mut out);
        }
        for (i, node) in self.nodes.iter().enumerate().skip(loss.0 + 1) {
            if node.requires_grad && matches!(node.op, Op::Leaf) {
                out[i] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        self.nodes.clear();
        Ok(Gradients { grads: out })
    }

    fn propagate(&self, i: usize, g: Vec<S>, adj: &mut [Option<Vec<S>>], out: &mut [Option<Tensor<S>>]) {
        let nodes = &self.nodes;
        let val = |v: Var| &nodes[v.0].value;
        let mut acc = |v: Var, f: &dyn Fn(&mut [S])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let slot = adj[v.0].get_or_insert_with(|| vec![S::zero(); nodes[v.0].value.numel()]);
            f(slot);
        };
        let node = &nodes[i];
        match &node.op {
            Op::Leaf => {
                out[i] = Some(Tensor::new(node.value.shape().to_vec(), g).expect("leaf shape"));
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = tb.shape()[1];
                // dA = G Bᵀ, written as axpy rows over a transposed copy of B
                acc(*a, &|da| {
                    let bd = tb.data();
                    let mut bt = vec![S::zero(); k * n];
                    for p in 0..k {
                        for j in 0..n {
                            bt[j * k + p] = bd[p * n + j];
                        }
                    }
                    matmul_acc(&g, &bt, da, m, n, k);
                });
                // dB = Aᵀ G
                acc(*b, &|db| {
                    let ad = ta.data();
                    for r in 0..m {
                        let gr = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let x = ad[r * k + p];
                            if x == S::zero() {
                                continue;
                            }
                            for (d, &y) in db[p * n..(p + 1) * n].iter_mut().zip(gr) {
                                *d += x * y;
                            }
                        }
                    }
                });
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let neg = matches!(node.op, Op::Sub(..));
                acc(*a, &|da| {
                    for (d, &x) in da.iter_mut().zip(&g) {
                        *d += x;
                    }
                });
                let bl = val(*b).numel();
                acc(*b, &|db| {
                    for (j, &x) in g.iter().enumerate() {
                        if neg {
                            db[j % bl] -= x;
                        } else {
                            db[j % bl] += x;
                        }
                    }
                });
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (val(*a).data(), val(*b).data());
                let bl = bd.len();
                acc(*a, &|da| {
                    for (j, d) in da.iter_mut().enumerate() {
                        *d += g[j] * bd[j % bl];
                    }
                });
                acc(*b, &|db| {
                    for (j, &x) in g.iter().enumerate() {
                        db[j % bl] += x * ad[j];
                    }
                });
            }
            Op::Scale(a, c) => acc(*a, &|da| {
                for (d, &x) in da.iter_mut().zip(&g) {
                    *d += x * *c;
                }
            }),
            Op::Relu(a) => {
                let ad = val(*a).data();
                acc(*a, &|da| {
                    for j in 0..da.len() {
                        if ad[j] > S::zero() {
                            da[j] += g[j];
                        }
                    }
                })
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                acc(*a, &|da| {
                    for j in 0..da.len() {
                        da[j] += g[j] * y[j] * (S::one() - y[j]);
                    }
                })
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                acc(*a, &|da| {
                    for j in 0..da.len() {
                        da[j] += g[j] * (S::one() - y[j] * y[j]);
                    }
                })
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let w = (*node.value.shape().last().unwrap_or(&1)).max(1);
                acc(*a, &|da| {
                    for ((dr, yr), gr) in da.chunks_mut(w).zip(y.chunks(w)).zip(g.chunks(w)) {
                        let dot: S = yr.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                        for j in 0..w {
                            dr[j] += yr[j] * (gr[j] - dot);
                        }
                    }
                })
            }
            Op::ConcatCols(parts) => {
                let rows = node.value.shape()[0];
                let total = node.value.shape()[1];
                let mut off = 0;
                for &p in parts {
                    let w = val(p).shape()[1];
                    acc(p, &|dp| {
                        for r in 0..rows {
                            for c in 0..w {
                                dp[r * w + c] += g[r * total + off + c];
                            }
                        }
                    });
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = val(p).numel();
                    acc(p, &|dp| {
                        for (d, &x) in dp.iter_mut().zip(&g[off..off + len]) {
                            *d += x;
                        }
                    });
                    off += len;
                }
            }
            Op::SliceRows(a, start) => {
                let c = node.value.shape()[1];
                acc(*a, &|da| {
                    for (d, &x) in da[start * c..start * c + g.len()].iter_mut().zip(&g) {
                        *d += x;
                    }
                })
            }
            Op::Gather(a, index) => {
                let c = node.value.shape()[1];
                acc(*a, &|da| {
                    for (r, &src) in index.iter().enumerate() {
                        for k in 0..c {
                            da[src * c + k] += g[r * c + k];
                        }
                    }
                })
            }
            Op::Segment { x, segment, weight } => {
                let c = node.value.shape()[1];
                acc(*x, &|dx| {
                    for (r, s) in segment.iter().enumerate() {
                        let Some(s) = *s else { continue };
                        for k in 0..c {
                            dx[r * c + k] += weight[r] * g[s * c + k];
                        }
                    }
                })
            }
            Op::SumAll(a) => acc(*a, &|da| {
                for d in da.iter_mut() {
                    *d += g[0];
                }
            }),
            Op::SumAxis(a, axis) => {
                let c = val(*a).shape()[1];
                acc(*a, &|da| {
                    for (j, d) in da.iter_mut().enumerate() {
                        *d += if *axis == 0 { g[j % c] } else { g[j / c] };
                    }
                })
            }
            Op::Dropout(a, mask) => acc(*a, &|da| {
                for j in 0..da.len() {
                    da[j] += g[j] * mask[j];
                }
            }),
            Op::SpMM(m, a) => {
                let c = node.value.shape()[1];
                acc(*a, &|da| {
                    let mut tmp = vec![S::zero(); da.len()];
                    m.adjoint.matmul_into(&g, c, &mut tmp);
                    for (d, t) in da.iter_mut().zip(tmp) {
                        *d += t;
                    }
                })
            }
            Op::Transpose(a) => {
                let (r, c) = (val(*a).shape()[0], val(*a).shape()[1]);
                acc(*a, &|da| {
                    for i in 0..r {
                        for j in 0..c {
                            da[i * c + j] += g[j * r + i];
                        }
                    }
                })
            }
            Op::LayerNorm { x, normed, inv_std } => {
                let c = node.value.shape()[1];
                let cn = S::lit(c as f64);
                acc(*x, &|dx| {
                    for (r, &is) in inv_std.iter().enumerate() {
                        let gr = &g[r * c..(r + 1) * c];
                        let nr = &normed[r * c..(r + 1) * c];
                        let mg = gr.iter().copied().sum::<S>() / cn;
                        let mgn = gr.iter().zip(nr).map(|(&a, &b)| a * b).sum::<S>() / cn;
                        for j in 0..c {
                            dx[r * c + j] += is * (gr[j] - mg - nr[j] * mgn);
                        }
                    }
                })
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                max_len,
                lengths,
                probs,
            } => self.attention_backward(&g, *q, *k, *v, *heads, *max_len, lengths, probs, adj),
            Op::Bce(a, targets) => {
                let x = val(*a).data();
                let n = S::lit(targets.len().max(1) as f64);
                acc(*a, &|da| {
                    for j in 0..da.len() {
                        da[j] += g[0] * (sigmoid(x[j]) - targets[j]) / n;
                    }
                })
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        g: &[S],
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        max_len: usize,
        lengths: &[usize],
        probs: &[S],
        adj: &mut [Option<Vec<S>>],
    ) {
        let d = self.value(q).shape()[1];
        let dh = d / heads;
        let scale = S::one() / S::lit(dh as f64).sqrt();
        let (qd, kd, vd) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let mut dq = vec![S::zero(); qd.len()];
        let mut dk = vec![S::zero(); kd.len()];
        let mut dv = vec![S::zero(); vd.len()];
        let mut dp = vec![S::zero(); max_len];
        for (b, &len) in lengths.iter().enumerate() {
            let base = b * max_len;
            for h in 0..heads {
                let off = h * dh;
                for i in 0..len {
                    let p = &probs[((b * heads + h) * max_len + i) * max_len..][..max_len];
                    let go = &g[(base + i) * d + off..][..dh];
                    let mut dot = S::zero();
                    for j in 0..len {
                        let vj = &vd[(base + j) * d + off..][..dh];
                        dp[j] = go.iter().zip(vj).map(|(&x, &y)| x * y).sum();
                        dot += p[j] * dp[j];
                        for (t, &x) in dv[(base + j) * d + off..][..dh].iter_mut().zip(go) {
                            *t += p[j] * x;
                        }
                    }
                    for j in 0..len {
                        let ds = p[j] * (dp[j] - dot) * scale;
                        for c in 0..dh {
                            dq[(base + i) * d + off + c] += ds * kd[(base + j) * d + off + c];
                            dk[(base + j) * d + off + c] += ds * qd[(base + i) * d + off + c];
                        }
                    }
                }
            }
        }
        for (var, grad) in [(q, dq), (k, dk), (v, dv)] {
            if !self.nodes[var.0].requires_grad {
                continue;
            }
            match &mut adj[var.0] {
                Some(slot) => {
                    for (s, x) in slot.iter_mut().zip(grad) {
                        *s += x;
                    }
                }
                slot @ None => *slot = Some(grad),
            }
        }
    }
}

fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// `out += a · b` for row-major `a: [m,k]`, `b: [k,n]`. Zero entries of `a`
/// are skipped, which makes one-hot inputs cheap.
fn matmul_acc<S: Scalar>(a: &[S], b: &[S], out: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let x = a[i * k + p];
            if x == S::zero() {
                continue;
            }
            for (o, &y) in orow.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += x * y;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, data).unwrap()
    }

    #[test]
    fn matmul_values_and_grads() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let b = tape.leaf(t(&[2, 1], &[5.0, 6.0]));
        let y = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(y).data(), &[17.0, 39.0]);
        let s = tape.sum(y);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(a).unwrap().data(), &[5.0, 6.0, 5.0, 6.0]);
        assert_eq!(g.get(b).unwrap().data(), &[4.0, 6.0]);
        assert!(tape.is_empty());
    }

    #[test]
    fn unused_leaf_gets_zero_grad() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(t(&[2], &[1.0, 2.0]));
        let unused = tape.leaf(t(&[3], &[1.0, 1.0, 1.0]));
        let s = tape.sum(a);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(unused).unwrap().data(), &[0.0; 3]);
    }

    #[test]
    fn broadcast_add_rejects_mismatch() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::zeros(&[2, 3]));
        let b = tape.leaf(Tensor::zeros(&[2]));
        assert!(tape.add(a, b).is_err());
    }

    #[test]
    fn bce_is_stable_for_large_logits() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t(&[2], &[800.0, -800.0]));
        let l = tape.bce_with_logits(x, Arc::from(vec![1.0, 0.0])).unwrap();
        assert!(tape.value(l).item().abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[2, 3], &[1.0, 2.0, 3.0, -1.0, 0.0, 1000.0]));
        let y = tape.softmax(x);
        for row in tape.value(y).data().chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn small_examples() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let id = tape.constant(Tensor::identity(2));
        let y = tape.matmul(a, id).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);
        let z = tape.constant(t(&[2], &[0.0, 0.0]));
        let sm = tape.softmax(z);
        assert_eq!(tape.value(sm).data(), &[0.5, 0.5]);
        let sg = tape.sigmoid(z);
        assert_eq!(tape.value(sg).data()[0], 0.5);
    }

    #[test]
    fn textbook_gradients() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t(&[3], &[1.0, 2.0, 3.0]));
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[2.0, 4.0, 6.0]);

        let xs = [0.5, -1.5, 2.0];
        let w = tape.leaf(Tensor::zeros(&[1, 3]));
        let xv = tape.constant(t(&[3, 1], &xs));
        let dot = tape.matmul(w, xv).unwrap();
        let s = tape.sigmoid(dot);
        let loss = tape.sum(s);
        let g = tape.backward(loss).unwrap();
        let want: Vec<f64> = xs.iter().map(|x| 0.25 * x).collect();
        assert_eq!(g.get(w).unwrap().data(), &want[..]);
    }
}
