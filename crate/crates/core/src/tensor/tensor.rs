use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Dense row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, S::zero())
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: S) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(shape.to_vec(), data.iter().map(|&x| S::lit(x)).collect())
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = S::one();
        }
        t
    }

    /// Uniform Glorot initialisation, `U(±sqrt(6 / (fan_in + fan_out)))`.
    pub fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(|_| S::lit(rng.gen_range(-bound..bound))).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Leading dimension.
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Size of one row when viewed as a `rows × cols` matrix.
    pub fn cols(&self) -> usize {
        let r = self.rows();
        if r == 0 {
            0
        } else {
            self.data.len() / r
        }
    }

    pub fn row(&self, i: usize) -> &[S] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn item(&self) -> S {
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> S {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(S::zero(), S::max)
    }
}

/// Compressed sparse rows; used for fixed propagation matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<S> {
    pub rows: usize,
    pub cols: usize,
    pub offsets: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<S>,
}

impl<S: Scalar> CsrMatrix<S> {
    /// Builds from triplets; entries are sorted by column within each row and
    /// duplicates summed.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, S)>) -> Self {
        triplets.sort_by_key(|a| (a.0, a.1));
        let mut offsets = vec![0; rows + 1];
        let mut indices: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut values: Vec<S> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            offsets[r + 1] += 1;
            indices.push(c);
            values.push(v);
        }
        for r in 0..rows {
            offsets[r + 1] += offsets[r];
        }
        Self {
            rows,
            cols,
            offsets,
            indices,
            values,
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Vec::with_capacity(self.values.len());
        for r in 0..self.rows {
            for k in self.offsets[r]..self.offsets[r + 1] {
                t.push((self.indices[k], r, self.values[k]));
            }
        }
        Self::from_triplets(self.cols, self.rows, t)
    }

    pub fn to_dense(&self) -> Tensor<S> {
        let mut d = Tensor::zeros(&[self.rows, self.cols]);
        for r in 0..self.rows {
            for k in self.offsets[r]..self.offsets[r + 1] {
                d.data[r * self.cols + self.indices[k]] += self.values[k];
            }
        }
        d
    }

    /// `self · x` for a row-major `x` with `width` columns.
    pub fn matmul_into(&self, x: &[S], width: usize, out: &mut [S]) {
        out.fill(S::zero());
        for r in 0..self.rows {
            let dst = &mut out[r * width..(r + 1) * width];
            for k in self.offsets[r]..self.offsets[r + 1] {
                let w = self.values[k];
                let src = &x[self.indices[k] * width..(self.indices[k] + 1) * width];
                for (o, &s) in dst.iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        }
    }
}

/// A constant sparse operator together with its transpose, for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator<S> {
    pub forward: CsrMatrix<S>,
    pub adjoint: CsrMatrix<S>,
}

impl<S: Scalar> SparseOperator<S> {
    pub fn new(forward: CsrMatrix<S>) -> Self {
        let adjoint = forward.transpose();
        Self { forward, adjoint }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_checked() {
        assert!(Tensor::<f64>::new(vec![2, 3], vec![0.0; 5]).is_err());
        let t = Tensor::<f64>::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(t.shape(), &[2, 2]);
        assert_eq!(t.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn csr_round_trip() {
        let m = CsrMatrix::from_triplets(2, 3, vec![(1, 2, 4.0), (0, 1, 1.0), (0, 1, 1.0)]);
        let d = m.to_dense();
        assert_eq!(d.data(), &[0.0, 2.0, 0.0, 0.0, 0.0, 4.0]);
        assert_eq!(m.transpose().to_dense().data(), &[0.0, 0.0, 2.0, 0.0, 0.0, 4.0]);
    }
}
