//! Row-major 2-D tensor of f64 plus the raw kernels shared by the graph ops
//! and the frozen-inference paths.

use alloc::vec;
use alloc::vec::Vec;

use super::{NumericsError, Result};
use crate::fmath;
use crate::rng::Rng;

/// Dense row-major matrix; vectors are 1xN, scalars 1x1.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(NumericsError::InvalidShape { rows, cols, len: data.len() });
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { rows: 1, cols: 1, data: vec![v] }
    }

    pub fn row(values: &[f64]) -> Self {
        Tensor { rows: 1, cols: values.len(), data: values.to_vec() }
    }

    /// Xavier-uniform initialisation: limit = sqrt(6 / (rows + cols)).
    pub fn xavier(rows: usize, cols: usize, rng: &mut Rng) -> Self {
        let limit = fmath::sqrt(6.0 / (rows + cols) as f64);
        let data = (0..rows * cols).map(|_| rng.uniform_in(-limit, limit)).collect();
        Tensor { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_slice_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn item(&self) -> f64 {
        debug_assert_eq!((self.rows, self.cols), (1, 1));
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self @ other`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols != other.rows {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Tensor::zeros(self.rows, other.cols);
        matmul_into(
            out.data_mut(),
            &self.data,
            &other.data,
            self.rows,
            self.cols,
            other.cols,
        );
        Ok(out)
    }

    /// `self @ other^T`.
    pub fn matmul_tb(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols != other.cols {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul_tb",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (n, m) = (self.rows, other.rows);
        let mut out = Tensor::zeros(n, m);
        for i in 0..n {
            let arow = self.row_slice(i);
            for j in 0..m {
                out.data[i * m + j] = dot(arow, other.row_slice(j));
            }
        }
        Ok(out)
    }

    /// Entrywise sum, same shape required.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return Err(NumericsError::ShapeMismatch {
                op: "add",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = self.clone();
        for (o, v) in out.data.iter_mut().zip(&other.data) {
            *o += v;
        }
        Ok(out)
    }

    /// Adds a 1xC row vector to every row.
    pub fn add_row(&self, row: &Tensor) -> Result<Tensor> {
        if row.rows != 1 || row.cols != self.cols {
            return Err(NumericsError::ShapeMismatch {
                op: "add_row",
                left: self.shape(),
                right: row.shape(),
            });
        }
        let mut out = self.clone();
        for r in 0..out.rows {
            let slice = out.row_slice_mut(r);
            for (o, v) in slice.iter_mut().zip(&row.data) {
                *o += v;
            }
        }
        Ok(out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v = f(*v);
        }
        out
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.map(|v| v * c)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return Err(NumericsError::ShapeMismatch {
                op: "mul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = self.clone();
        for (o, v) in out.data.iter_mut().zip(&other.data) {
            *o *= v;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return Err(NumericsError::ShapeMismatch {
                op: "sub",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = self.clone();
        for (o, v) in out.data.iter_mut().zip(&other.data) {
            *o -= v;
        }
        Ok(out)
    }

    /// Concatenates tensors left-to-right (same row count).
    pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
        debug_assert!(!parts.is_empty());
        let rows = parts[0].rows;
        let mut cols = 0;
        for p in parts {
            if p.rows != rows {
                return Err(NumericsError::ShapeMismatch {
                    op: "concat_cols",
                    left: parts[0].shape(),
                    right: p.shape(),
                });
            }
            cols += p.cols;
        }
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let dst = out.row_slice_mut(r);
            let mut off = 0;
            for p in parts {
                dst[off..off + p.cols].copy_from_slice(p.row_slice(r));
                off += p.cols;
            }
        }
        Ok(out)
    }

    /// Stacks tensors top-to-bottom (same column count).
    pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor> {
        debug_assert!(!parts.is_empty());
        let cols = parts[0].cols;
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(NumericsError::ShapeMismatch {
                    op: "concat_rows",
                    left: parts[0].shape(),
                    right: p.shape(),
                });
            }
            rows += p.rows;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor { rows, cols, data })
    }

    /// Per-column maximum over rows: RxC -> 1xC.
    pub fn row_maxpool(&self) -> Tensor {
        debug_assert!(self.rows > 0);
        let mut out = Tensor::row(self.row_slice(0));
        for r in 1..self.rows {
            for (o, v) in out.data.iter_mut().zip(self.row_slice(r)) {
                if *v > *o {
                    *o = *v;
                }
            }
        }
        out
    }

    /// Row-wise softmax with max subtraction; an all-equal row maps to the
    /// uniform distribution.
    pub fn row_softmax(&self) -> Tensor {
        let mut out = self.clone();
        for r in 0..out.rows {
            let slice = out.row_slice_mut(r);
            let max = slice.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in slice.iter_mut() {
                *v = fmath::exp(*v - max);
                sum += *v;
            }
            for v in slice.iter_mut() {
                *v /= sum;
            }
        }
        out
    }

    /// Sum along each row: RxC -> Rx1.
    pub fn row_sum(&self) -> Tensor {
        let mut out = Tensor::zeros(self.rows, 1);
        for r in 0..self.rows {
            out.data[r] = self.row_slice(r).iter().sum();
        }
        out
    }

    pub fn sum_all(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Sum of squared entries.
    pub fn l2_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// `out = a(n x k) @ b(k x m)`, row-major. The saxpy loop order keeps the
/// inner loop over contiguous rows of `b` so it autovectorizes.
pub(crate) fn matmul_into(out: &mut [f64], a: &[f64], b: &[f64], n: usize, k: usize, m: usize) {
    debug_assert_eq!(out.len(), n * m);
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), k * m);
    out.fill(0.0);
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * m..(i + 1) * m];
        for (kk, &aik) in arow.iter().enumerate() {
            let brow = &b[kk * m..(kk + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
}

/// Dot product with four independent accumulators; deterministic order.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let chunks = a.len() / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..chunks {
        let i = c * 4;
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    let mut s = (s0 + s2) + (s1 + s3);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn matmul_tb_matches_matmul() {
        let a = Tensor::from_vec(2, 3, vec![1.0, -2.0, 3.0, 0.5, 5.0, -6.0]).unwrap();
        let b = Tensor::from_vec(4, 3, (0..12).map(|i| i as f64 * 0.3 - 1.0).collect()).unwrap();
        // a @ b^T via explicit transpose.
        let mut bt = Tensor::zeros(3, 4);
        for r in 0..4 {
            for c in 0..3 {
                bt.set(c, r, b.at(r, c));
            }
        }
        let want = a.matmul(&bt).unwrap();
        let got = a.matmul_tb(&b).unwrap();
        for (x, y) in got.data().iter().zip(want.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let a = Tensor::zeros(2, 3);
        let b = Tensor::zeros(4, 2);
        let err = a.matmul(&b).unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("2x3") && msg.contains("4x2"), "got {msg}");
    }

    #[test]
    fn row_maxpool_per_column() {
        let a = Tensor::from_vec(2, 2, vec![1.0, 5.0, 3.0, 2.0]).unwrap();
        assert_eq!(a.row_maxpool().data(), &[3.0, 5.0]);
    }

    #[test]
    fn softmax_zero_row_uniform() {
        let a = Tensor::zeros(1, 4);
        let s = a.row_softmax();
        for v in s.data() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let a = Tensor::from_vec(3, 4, (0..12).map(|i| (i as f64).sin() * 3.0).collect()).unwrap();
        let s = a.row_softmax();
        for r in 0..3 {
            let sum: f64 = s.row_slice(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn concat_shapes() {
        let a = Tensor::zeros(2, 3);
        let b = Tensor::zeros(2, 5);
        assert_eq!(Tensor::concat_cols(&[&a, &b]).unwrap().shape(), (2, 8));
        let c = Tensor::zeros(4, 3);
        assert_eq!(Tensor::concat_rows(&[&a, &c]).unwrap().shape(), (6, 3));
        assert!(Tensor::concat_cols(&[&a, &c]).is_err());
    }

    #[test]
    fn xavier_within_limit() {
        let mut rng = Rng::new(1);
        let t = Tensor::xavier(8, 8, &mut rng);
        let limit = (6.0f64 / 16.0).sqrt();
        assert!(t.data().iter().all(|v| v.abs() <= limit));
    }
}
