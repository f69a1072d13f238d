use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};

/// Dense row-major matrix; rows are batch samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// `(m x k) · (k x n)` over strided operands given as `(data, row stride, col stride)`.
fn gemm(m: usize, k: usize, n: usize, a: (&[f64], usize, usize), b: (&[f64], usize, usize)) -> Tensor2 {
    let mut out = Tensor2::zeros(m, n);
    if m == 0 || n == 0 {
        return out;
    }
    debug_assert!(a.0.len() >= m * k && b.0.len() >= k * n);
    // SAFETY: callers check shapes, so every index the strides reach is in bounds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1 as isize,
            a.2 as isize,
            b.0.as_ptr(),
            b.1 as isize,
            b.2 as isize,
            0.0,
            out.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    out
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape_err!("{} values for a {rows}x{cols} tensor", data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    /// Stacks equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(shape_err!("row {i} has {} values, expected {cols}", r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Copy of rows `start..end`.
    pub fn row_range(&self, start: usize, end: usize) -> Self {
        Self { rows: end - start, cols: self.cols, data: self.data[start * self.cols..end * self.cols].to_vec() }
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self { rows: idx.len(), cols: self.cols, data }
    }

    /// `self · other`. Each output row depends only on the matching input
    /// row and is accumulated in a fixed order, so results do not depend on
    /// batch composition.
    pub fn matmul(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.cols != other.rows {
            return Err(shape_err!("matmul {:?} x {:?}", self.shape(), other.shape()));
        }
        Ok(gemm(self.rows, self.cols, other.cols, (&self.data, self.cols, 1), (&other.data, other.cols, 1)))
    }

    /// `selfᵀ · other`, used for weight gradients.
    pub fn t_matmul(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.rows != other.rows {
            return Err(shape_err!("t_matmul {:?}ᵀ x {:?}", self.shape(), other.shape()));
        }
        Ok(gemm(self.cols, self.rows, other.cols, (&self.data, 1, self.cols), (&other.data, other.cols, 1)))
    }

    /// `self · otherᵀ`, used to propagate gradients to layer inputs.
    pub fn matmul_t(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.cols != other.cols {
            return Err(shape_err!("matmul_t {:?} x {:?}ᵀ", self.shape(), other.shape()));
        }
        Ok(gemm(self.rows, self.cols, other.rows, (&self.data, self.cols, 1), (&other.data, 1, other.cols)))
    }

    pub fn add(&self, other: &Tensor2) -> Result<Tensor2> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn hadamard(&self, other: &Tensor2) -> Result<Tensor2> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn zip_with(&self, other: &Tensor2, f: impl Fn(f64, f64) -> f64) -> Result<Tensor2> {
        if self.shape() != other.shape() {
            return Err(shape_err!("elementwise {:?} vs {:?}", self.shape(), other.shape()));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor2 { rows: self.rows, cols: self.cols, data })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor2 {
        Tensor2 { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Column sums (used for bias gradients).
    pub fn sum_rows(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        out
    }

    /// Horizontal concatenation.
    pub fn hcat(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.rows != other.rows {
            return Err(shape_err!("hcat {:?} with {:?}", self.shape(), other.shape()));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(Tensor2 { rows: self.rows, cols, data })
    }

    /// Splits columns at `at` into `(left, right)`.
    pub fn hsplit(&self, at: usize) -> (Tensor2, Tensor2) {
        let mut left = Tensor2::zeros(self.rows, at);
        let mut right = Tensor2::zeros(self.rows, self.cols - at);
        for i in 0..self.rows {
            let r = self.row(i);
            left.row_mut(i).copy_from_slice(&r[..at]);
            right.row_mut(i).copy_from_slice(&r[at..]);
        }
        (left, right)
    }

    /// Repeats every column `k` times in place: `[a, b] -> [a, a, b, b]`.
    pub fn repeat_cols(&self, k: usize) -> Tensor2 {
        let mut out = Tensor2::zeros(self.rows, self.cols * k);
        for i in 0..self.rows {
            let src = self.row(i);
            let dst = out.row_mut(i);
            for (j, &v) in src.iter().enumerate() {
                dst[j * k..(j + 1) * k].fill(v);
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor2) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, v: &[f64]) -> Tensor2 {
        Tensor2::from_vec(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn matmul_small() {
        let a = t(2, 3, &[1., 2., 3., 4., 5., 6.]);
        let b = t(3, 2, &[7., 8., 9., 10., 11., 12.]);
        assert_eq!(a.matmul(&b).unwrap(), t(2, 2, &[58., 64., 139., 154.]));
        assert!(b.matmul(&b).is_err());
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = t(3, 2, &[1., -2., 0.5, 4., 3., 1.]);
        let b = t(3, 4, &[1., 2., 3., 4., 5., 6., 7., 8., 9., 10., 11., 12.]);
        let at = t(2, 3, &[1., 0.5, 3., -2., 4., 1.]);
        assert_eq!(a.t_matmul(&b).unwrap(), at.matmul(&b).unwrap());
        let c = t(2, 3, &[1., 2., 3., 4., 5., 6.]);
        assert_eq!(c.matmul_t(&c).unwrap(), t(2, 2, &[14., 32., 32., 77.]));
    }

    #[test]
    fn repeat_and_split() {
        let a = t(2, 2, &[1., 0., 0., 1.]);
        assert_eq!(a.repeat_cols(2), t(2, 4, &[1., 1., 0., 0., 0., 0., 1., 1.]));
        let (l, r) = a.hcat(&a.repeat_cols(2)).unwrap().hsplit(2);
        assert_eq!(l, a);
        assert_eq!(r, a.repeat_cols(2));
    }

    #[test]
    fn from_rows_checks_lengths() {
        assert!(Tensor2::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        assert_eq!(Tensor2::from_rows(&[[1.0, 2.0]]).unwrap().shape(), (1, 2));
    }
}
