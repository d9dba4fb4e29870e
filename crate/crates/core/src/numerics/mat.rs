//! Dense row-major matrices over any [`Scalar`].
//!
//! Shapes are validated at every API boundary; a mismatch is reported as a
//! [`ShapeError`] naming the operation and both shapes. Internal parallelism
//! (rayon, large matmuls only) splits across independent output rows, so
//! results are bit-identical to the sequential loop.

use std::fmt;

use rayon::prelude::*;

use super::rng::RngState;
use super::scalar::Scalar;

/// Structured shape/contract violation raised by matrix operations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ShapeError {
    /// Two operands have incompatible shapes for `op`.
    Mismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// An operand that must be a column vector is not one.
    NotColumn {
        op: &'static str,
        shape: (usize, usize),
    },
    /// Raw data length does not match rows x cols.
    DataLength { expected: usize, got: usize },
    /// An operand or input slice is empty where a value is required.
    Empty { op: &'static str },
}

impl fmt::Display for ShapeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShapeError::Mismatch { op, left, right } => write!(
                f,
                "{op}: incompatible shapes {}x{} and {}x{}",
                left.0, left.1, right.0, right.1
            ),
            ShapeError::NotColumn { op, shape } => {
                write!(
                    f,
                    "{op}: expected a column vector, got {}x{}",
                    shape.0, shape.1
                )
            }
            ShapeError::DataLength { expected, got } => {
                write!(f, "data length {got} does not match rows*cols = {expected}")
            }
            ShapeError::Empty { op } => write!(f, "{op}: empty input"),
        }
    }
}

impl std::error::Error for ShapeError {}

/// Dense matrix with row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// Above this many multiply-adds, matmul fans out across output rows.
const PAR_MATMUL_FLOPS: usize = 1 << 16;

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, ShapeError> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(ShapeError::DataLength {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Mat { rows, cols, data })
    }

    /// Column vector from a slice.
    pub fn column(values: &[T]) -> Result<Self, ShapeError> {
        Self::from_vec(values.len(), 1, values.to_vec())
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    /// Entries i.i.d. uniform on `[-scale, +scale]`, drawn in row-major order.
    pub fn init_uniform(rows: usize, cols: usize, rng: &mut RngState, scale: T) -> Self {
        assert!(scale > T::zero(), "init_uniform requires scale > 0");
        let two = T::from_f64(2.0);
        let data = (0..rows * cols)
            .map(|_| scale * (two * T::from_f64(rng.next_f64()) - T::one()))
            .collect();
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_column(&self) -> bool {
        self.cols == 1
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Copy of column `j`.
    pub fn col(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// New matrix made of the given columns, in order.
    pub fn select_columns(&self, indices: &[usize]) -> Result<Self, ShapeError> {
        if indices.is_empty() {
            return Err(ShapeError::Empty {
                op: "select_columns",
            });
        }
        let mut out = Mat::zeros(self.rows, indices.len());
        for (k, &j) in indices.iter().enumerate() {
            for i in 0..self.rows {
                out.set(i, k, self.get(i, j));
            }
        }
        Ok(out)
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &Mat<T>) -> Result<Mat<T>, ShapeError> {
        if self.cols != other.rows {
            return Err(ShapeError::Mismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![T::zero(); n * m];
        let work = n * k * m;
        let body = |(i, out_row): (usize, &mut [T])| {
            let a_row = &self.data[i * k..(i + 1) * k];
            for (p, &a) in a_row.iter().enumerate() {
                let b_row = &other.data[p * m..(p + 1) * m];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        };
        if work >= PAR_MATMUL_FLOPS {
            out.par_chunks_mut(m).enumerate().for_each(body);
        } else {
            out.chunks_mut(m).enumerate().for_each(body);
        }
        Ok(Mat {
            rows: n,
            cols: m,
            data: out,
        })
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &Mat<T>) -> Result<Mat<T>, ShapeError> {
        self.zip_with("hadamard", other, |a, b| a * b)
    }

    pub fn add(&self, other: &Mat<T>) -> Result<Mat<T>, ShapeError> {
        self.zip_with("add", other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Mat<T>) -> Result<Mat<T>, ShapeError> {
        self.zip_with("sub", other, |a, b| a - b)
    }

    fn zip_with(
        &self,
        op: &'static str,
        other: &Mat<T>,
        f: impl Fn(T, T) -> T,
    ) -> Result<Mat<T>, ShapeError> {
        if self.shape() != other.shape() {
            return Err(ShapeError::Mismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Add a column vector to every column (bias broadcast).
    pub fn add_col_broadcast(&self, col: &Mat<T>) -> Result<Mat<T>, ShapeError> {
        if !col.is_column() {
            return Err(ShapeError::NotColumn {
                op: "add_col_broadcast",
                shape: col.shape(),
            });
        }
        if col.rows != self.rows {
            return Err(ShapeError::Mismatch {
                op: "add_col_broadcast",
                left: self.shape(),
                right: col.shape(),
            });
        }
        let mut out = self.clone();
        for i in 0..out.rows {
            let c = col.data[i];
            for j in 0..out.cols {
                out.data[i * out.cols + j] += c;
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Mat<T> {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn scale(&self, factor: T) -> Mat<T> {
        self.map(|v| v * factor)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Mat<T> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self += factor * other`, in place. Shapes must match.
    pub fn add_scaled_assign(&mut self, other: &Mat<T>, factor: T) -> Result<(), ShapeError> {
        if self.shape() != other.shape() {
            return Err(ShapeError::Mismatch {
                op: "add_scaled_assign",
                left: self.shape(),
                right: other.shape(),
            });
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
        Ok(())
    }

    /// Sum across columns, as an n x 1 vector.
    pub fn row_sum(&self) -> Mat<T> {
        let mut out = Mat::zeros(self.rows, 1);
        for i in 0..self.rows {
            out.data[i] = self.row(i).iter().copied().sum::<T>();
        }
        out
    }

    /// Mean across columns, as an n x 1 vector.
    pub fn row_mean(&self) -> Mat<T> {
        self.row_sum().scale(T::one() / T::from_usize(self.cols))
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Outer product `u * v^T` of two column vectors: n x m with entry `u[i]*v[j]`.
pub fn outer<T: Scalar>(u: &Mat<T>, v: &Mat<T>) -> Result<Mat<T>, ShapeError> {
    if !u.is_column() {
        return Err(ShapeError::NotColumn {
            op: "outer",
            shape: u.shape(),
        });
    }
    if !v.is_column() {
        return Err(ShapeError::NotColumn {
            op: "outer",
            shape: v.shape(),
        });
    }
    let mut out = Mat::zeros(u.rows(), v.rows());
    for i in 0..u.rows() {
        for j in 0..v.rows() {
            out.set(i, j, u.get(i, 0) * v.get(j, 0));
        }
    }
    Ok(out)
}

/// Index of the maximum value; ties break to the lowest index.
pub fn argmax<T: Scalar>(values: &[T]) -> Result<usize, ShapeError> {
    if values.is_empty() {
        return Err(ShapeError::Empty { op: "argmax" });
    }
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    Ok(best)
}
