//! Dense row-major `f64` tensors.
//!
//! Every tensor that flows through the networks is a matrix `[rows, cols]`:
//! a batch of points is `[n, d]`, a scalar is `[1, 1]`. The kernels below are
//! shared by the autodiff tape and by the graph-free forward paths, so both
//! produce bitwise identical values. All reductions run in a fixed index order.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct RealTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for RealTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RealTensor{:?}{:?}", self.shape, self.data)
    }
}

impl RealTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::shape(
                "tensor",
                alloc::format!("shape {:?} needs {} values, got {}", shape, len, data.len()),
            ));
        }
        Ok(RealTensor { shape, data })
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        RealTensor {
            shape: vec![rows, cols],
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        RealTensor {
            shape: vec![rows, cols],
            data: vec![value; rows * cols],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::filled(1, 1, value)
    }

    /// A single point as a `[1, d]` row.
    pub fn row(values: &[f64]) -> Self {
        RealTensor {
            shape: vec![1, values.len()],
            data: values.to_vec(),
        }
    }

    /// Stacks equally long rows into `[rows.len(), d]`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::shape("from_rows", "ragged rows"));
            }
            data.extend_from_slice(r);
        }
        Self::matrix(rows.len(), cols, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Number of rows of a rank-2 tensor (1 for rank 0/1).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[0],
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1..].iter().product(),
        }
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row_slice(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    /// The only value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::NotScalar {
                rows: self.rows(),
                cols: self.cols(),
            })
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        RealTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.shape, other.shape);
        RealTensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows() == other.rows() && self.cols() == other.cols()
    }

    /// Rows `start..end` as a new tensor.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        let c = self.cols();
        RealTensor {
            shape: vec![end - start, c],
            data: self.data[start * c..end * c].to_vec(),
        }
    }

    /// Concatenates row blocks with the same column count.
    pub fn vstack(parts: &[&RealTensor]) -> Result<Self> {
        let cols = parts.first().map_or(0, |p| p.cols());
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols() != cols {
                return Err(Error::shape("vstack", "column counts differ"));
            }
            rows += p.rows();
            data.extend_from_slice(&p.data);
        }
        Self::matrix(rows, cols, data)
    }

    /// Sum of all entries in index order.
    pub fn sum(&self) -> f64 {
        let mut acc = 0.0;
        for &v in &self.data {
            acc += v;
        }
        acc
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }
}

/// `a[n,k] · b[k,m]`. Each output row accumulates four rows of `b` at a
/// time, in increasing `p`; single-column products are plain dot products.
pub fn matmul(a: &RealTensor, b: &RealTensor) -> Result<RealTensor> {
    let (n, k) = (a.rows(), a.cols());
    let (k2, m) = (b.rows(), b.cols());
    if k != k2 {
        return Err(Error::shape("matmul", alloc::format!("[{n},{k}] x [{k2},{m}]")));
    }
    let mut out = vec![0.0; n * m];
    if m == 1 {
        for (o, arow) in out.iter_mut().zip(a.data.chunks_exact(k.max(1))) {
            *o = arow.iter().zip(&b.data).fold(0.0, |acc, (x, y)| acc + x * y);
        }
        if k == 0 {
            out.iter_mut().for_each(|o| *o = 0.0);
        }
        return Ok(RealTensor {
            shape: vec![n, m],
            data: out,
        });
    }
    let quads = k / 4;
    for i in 0..n {
        let arow = &a.data[i * k..(i + 1) * k];
        let orow = &mut out[i * m..(i + 1) * m];
        for q in 0..quads {
            let p = 4 * q;
            let (a0, a1, a2, a3) = (arow[p], arow[p + 1], arow[p + 2], arow[p + 3]);
            let b0 = &b.data[p * m..(p + 1) * m];
            let b1 = &b.data[(p + 1) * m..(p + 2) * m];
            let b2 = &b.data[(p + 2) * m..(p + 3) * m];
            let b3 = &b.data[(p + 3) * m..(p + 4) * m];
            for ((((o, &x0), &x1), &x2), &x3) in orow.iter_mut().zip(b0).zip(b1).zip(b2).zip(b3) {
                *o += a0 * x0 + a1 * x1 + a2 * x2 + a3 * x3;
            }
        }
        for p in 4 * quads..k {
            let av = arow[p];
            let brow = &b.data[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(RealTensor {
        shape: vec![n, m],
        data: out,
    })
}

pub fn transpose(a: &RealTensor) -> RealTensor {
    let (n, m) = (a.rows(), a.cols());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            out[j * n + i] = a.data[i * m + j];
        }
    }
    RealTensor {
        shape: vec![m, n],
        data: out,
    }
}

/// `a[n,m] + bias[1,m]` broadcast over rows.
pub fn add_row(a: &RealTensor, bias: &RealTensor) -> Result<RealTensor> {
    let m = a.cols();
    if bias.len() != m {
        return Err(Error::shape(
            "add_row",
            alloc::format!("bias of {} for {} columns", bias.len(), m),
        ));
    }
    let mut out = a.clone();
    for row in out.data.chunks_mut(m.max(1)) {
        for (o, &b) in row.iter_mut().zip(&bias.data) {
            *o += b;
        }
    }
    Ok(out)
}

/// Column sums `[n,m] -> [1,m]`, rows visited in order.
pub fn sum_rows(a: &RealTensor) -> RealTensor {
    let m = a.cols();
    let mut out = vec![0.0; m];
    for row in a.data.chunks(m.max(1)) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    RealTensor {
        shape: vec![1, m],
        data: out,
    }
}

/// Row sums `[n,m] -> [n,1]`.
pub fn sum_cols(a: &RealTensor) -> RealTensor {
    let (n, m) = (a.rows(), a.cols());
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = 0.0;
        for &v in &a.data[i * m..(i + 1) * m] {
            acc += v;
        }
        out.push(acc);
    }
    RealTensor {
        shape: vec![n, 1],
        data: out,
    }
}

/// `[1,m] -> [n,m]`.
pub fn broadcast_rows(a: &RealTensor, n: usize) -> RealTensor {
    let mut data = Vec::with_capacity(n * a.len());
    for _ in 0..n {
        data.extend_from_slice(&a.data);
    }
    RealTensor {
        shape: vec![n, a.len()],
        data,
    }
}

/// `[n,1] -> [n,m]`.
pub fn broadcast_cols(a: &RealTensor, m: usize) -> RealTensor {
    let n = a.len();
    let mut data = Vec::with_capacity(n * m);
    for &v in &a.data {
        data.extend(core::iter::repeat_n(v, m));
    }
    RealTensor {
        shape: vec![n, m],
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = RealTensor::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = RealTensor::matrix(3, 1, vec![1., 0., -1.]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[-2.0, -2.0]);
        assert!(matmul(&b, &b).is_err());
    }

    #[test]
    fn shape_invariant() {
        assert!(RealTensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        let t = transpose(&RealTensor::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap());
        assert_eq!(t.shape(), &[3, 2]);
        assert_eq!(t.data(), &[1., 4., 2., 5., 3., 6.]);
    }

    #[test]
    fn reductions_and_broadcasts() {
        let a = RealTensor::matrix(2, 2, vec![1., 2., 3., 4.]).unwrap();
        assert_eq!(sum_rows(&a).data(), &[4., 6.]);
        assert_eq!(sum_cols(&a).data(), &[3., 7.]);
        assert_eq!(broadcast_rows(&RealTensor::row(&[1., 2.]), 2).data(), &[1., 2., 1., 2.]);
        assert_eq!(broadcast_cols(&sum_cols(&a), 2).data(), &[3., 3., 7., 7.]);
        assert_eq!(
            add_row(&a, &RealTensor::row(&[10., 20.])).unwrap().data(),
            &[11., 22., 13., 24.]
        );
    }
}
