//! Dense row-major `f32` matrices and the row-stochastic attention wrapper.

use std::fmt;

use crate::error::{Error, Result};

/// Tolerance on row sums accepted by [`AttentionMatrix::new`].
pub const ROW_SUM_TOLERANCE: f32 = 1e-5;

/// Dense row-major 2-D array of finite `f32` values.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    /// Builds a matrix, rejecting a length mismatch or any non-finite value.
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::new",
                format!(
                    "{rows}x{cols} needs {} values, got {}",
                    rows * cols,
                    data.len()
                ),
            ));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                op: "Matrix::new",
                index,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn filled(rows: usize, cols: usize, value: f32) -> Self {
        assert!(value.is_finite());
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(
                    "Matrix::from_rows",
                    format!("row {i} has {} values, expected {cols}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    // Internal constructor for kernels whose output is finite by construction.
    pub(crate) fn from_parts(rows: usize, cols: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
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

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        (0..self.rows).map(move |r| self.row(r))
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Matrix::from_parts(self.cols, self.rows, out)
    }

    /// Copies columns `start..end` into a new matrix.
    pub fn columns(&self, start: usize, end: usize) -> Result<Matrix> {
        if start > end || end > self.cols {
            return Err(Error::shape(
                "columns",
                format!("range {start}..{end} outside {} columns", self.cols),
            ));
        }
        let width = end - start;
        let mut out = Vec::with_capacity(self.rows * width);
        for row in self.iter_rows() {
            out.extend_from_slice(&row[start..end]);
        }
        Ok(Matrix::from_parts(self.rows, width, out))
    }

    /// Concatenates matrices with equal row counts side by side.
    pub fn hstack(parts: &[Matrix]) -> Result<Matrix> {
        let rows = parts.first().map_or(0, Matrix::rows);
        if let Some(bad) = parts.iter().find(|p| p.rows != rows) {
            return Err(Error::shape(
                "hstack",
                format!("row counts differ: {rows} vs {}", bad.rows),
            ));
        }
        let cols: usize = parts.iter().map(Matrix::cols).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                out.extend_from_slice(p.row(r));
            }
        }
        Ok(Matrix::from_parts(rows, cols, out))
    }

    /// Elementwise sum; both operands must share a shape.
    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                "add",
                format!("{:?} vs {:?}", self.shape(), other.shape()),
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Matrix::from_parts(self.rows, self.cols, data).checked("add")
    }

    pub fn scale(&self, factor: f32) -> Result<Matrix> {
        let data = self.data.iter().map(|v| v * factor).collect();
        Matrix::from_parts(self.rows, self.cols, data).checked("scale")
    }

    pub(crate) fn checked(self, op: &'static str) -> Result<Matrix> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite { op, index }),
            None => Ok(self),
        }
    }

    /// Largest absolute elementwise difference; shapes must match.
    pub fn max_abs_diff(&self, other: &Matrix) -> f32 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} ", self.rows, self.cols)?;
        f.debug_list().entries(self.iter_rows()).finish()
    }
}

/// Square row-stochastic matrix: entry `(i, j)` is how much token `i` attends to token `j`.
#[derive(Clone, PartialEq)]
pub struct AttentionMatrix {
    inner: Matrix,
}

impl AttentionMatrix {
    /// Validates squareness, entry range and row sums (within [`ROW_SUM_TOLERANCE`]).
    pub fn new(inner: Matrix) -> Result<Self> {
        if inner.rows != inner.cols {
            return Err(Error::shape(
                "AttentionMatrix::new",
                format!("expected square, got {}x{}", inner.rows, inner.cols),
            ));
        }
        if inner.rows == 0 {
            return Err(Error::Empty("AttentionMatrix::new"));
        }
        for (r, row) in inner.iter_rows().enumerate() {
            if let Some((c, &value)) = row
                .iter()
                .enumerate()
                .find(|(_, v)| !(0.0..=1.0).contains(*v))
            {
                return Err(Error::OutOfRange {
                    row: r,
                    col: c,
                    value,
                });
            }
            let sum: f32 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::NotStochastic { row: r, sum });
            }
        }
        Ok(Self { inner })
    }

    pub(crate) fn from_softmax(inner: Matrix) -> Self {
        debug_assert_eq!(inner.rows, inner.cols);
        Self { inner }
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            inner: Matrix::filled(n, n, 1.0 / n as f32),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            inner: Matrix::identity(n),
        }
    }

    /// Token count.
    pub fn n(&self) -> usize {
        self.inner.rows
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.inner.get(r, c)
    }

    pub fn row(&self, r: usize) -> &[f32] {
        self.inner.row(r)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.inner
    }

    pub fn into_matrix(self) -> Matrix {
        self.inner
    }

    /// Elementwise mean of equally sized attention matrices (e.g. over heads).
    pub fn mean(parts: &[AttentionMatrix]) -> Result<AttentionMatrix> {
        let first = parts.first().ok_or(Error::Empty("AttentionMatrix::mean"))?;
        let n = first.n();
        if let Some(bad) = parts.iter().find(|p| p.n() != n) {
            return Err(Error::shape(
                "AttentionMatrix::mean",
                format!("token counts differ: {n} vs {}", bad.n()),
            ));
        }
        let mut acc = vec![0.0f32; n * n];
        for p in parts {
            for (a, v) in acc.iter_mut().zip(p.inner.as_slice()) {
                *a += v;
            }
        }
        let count = parts.len() as f32;
        for a in &mut acc {
            *a /= count;
        }
        Ok(Self {
            inner: Matrix::from_parts(n, n, acc),
        })
    }
}

impl fmt::Debug for AttentionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Attention{:?}", self.inner)
    }
}
