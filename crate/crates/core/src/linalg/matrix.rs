use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real matrix. Spectra (and atoms) are stored as columns; storage is
/// column-major, so `column(j)` is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix(DMatrix<f64>);

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Matrix(DMatrix::identity(n, n))
    }

    /// Builds from column-major data. Rejects empty shapes and non-finite entries.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Contract(format!("matrix shape {rows}x{cols} must be non-empty")));
        }
        if data.len() != rows * cols {
            return Err(Error::dims("Matrix::from_col_major", rows * cols, data.len()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("non-finite entry at flat index {pos}")));
        }
        Ok(Matrix(DMatrix::from_vec(rows, cols, data)))
    }

    /// Builds from a list of rows (test and literal convenience).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::Contract("ragged rows".into()));
        }
        let mut data = Vec::with_capacity(nrows * ncols);
        for j in 0..ncols {
            data.extend(rows.iter().map(|r| r[j]));
        }
        Self::from_col_major(nrows, ncols, data)
    }

    pub fn from_columns<C: AsRef<[f64]>>(columns: &[C]) -> Result<Self> {
        let ncols = columns.len();
        let nrows = columns.first().map_or(0, |c| c.as_ref().len());
        if columns.iter().any(|c| c.as_ref().len() != nrows) {
            return Err(Error::Contract("columns of unequal length".into()));
        }
        let data = columns.iter().flat_map(|c| c.as_ref().iter().copied()).collect();
        Self::from_col_major(nrows, ncols, data)
    }

    pub(crate) fn from_inner(m: DMatrix<f64>) -> Self {
        Matrix(m)
    }

    pub(crate) fn inner(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.0[(i, j)] = v;
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let m = self.rows();
        &self.0.as_slice()[j * m..(j + 1) * m]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        let m = self.rows();
        &mut self.0.as_mut_slice()[j * m..(j + 1) * m]
    }

    pub fn as_col_major(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix(self.0.transpose())
    }

    /// `self * rhs`
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols() != rhs.rows() {
            return Err(Error::dims("matmul", format!("{} rows", self.cols()), rhs.rows()));
        }
        Ok(Matrix(&self.0 * &rhs.0))
    }

    /// `self * rhsᵀ`, the reconstruction `A·Bᵀ` when called as `a.matmul_t(b)`.
    pub fn matmul_t(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols() != rhs.cols() {
            return Err(Error::dims("matmul_t", format!("{} cols", self.cols()), rhs.cols()));
        }
        Ok(Matrix(&self.0 * rhs.0.transpose()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn select_columns(&self, indices: &[usize]) -> Matrix {
        Matrix(self.0.select_columns(indices))
    }

    /// Horizontal concatenation `[a, b, ...]`.
    pub fn hcat(parts: &[&Matrix]) -> Result<Matrix> {
        let rows = parts.first().map_or(0, |p| p.rows());
        if let Some(bad) = parts.iter().find(|p| p.rows() != rows) {
            return Err(Error::dims("Matrix::hcat", rows, bad.rows()));
        }
        let cols = parts.iter().map(|p| p.cols()).sum();
        let data = parts.iter().flat_map(|p| p.as_col_major().iter().copied()).collect();
        Matrix::from_col_major(rows, cols, data)
    }

    pub fn map(&self, f: impl FnMut(f64) -> f64) -> Matrix {
        Matrix(self.0.map(f))
    }

    pub fn min_value(&self) -> f64 {
        self.0.min()
    }

    pub fn sub(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.shape() != rhs.shape() {
            return Err(Error::dims("sub", format!("{:?}", self.shape()), format!("{:?}", rhs.shape())));
        }
        Ok(Matrix(&self.0 - &rhs.0))
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Serialize for Matrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixRepr {
            rows: self.rows(),
            cols: self.cols(),
            data: self.as_col_major().to_vec(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = MatrixRepr::deserialize(d)?;
        Matrix::from_col_major(repr.rows, repr.cols, repr.data).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(Matrix::from_col_major(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::from_col_major(0, 2, vec![]).is_err());
        assert!(Matrix::from_col_major(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn from_rows_is_column_major() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.column(0), &[1.0, 3.0]);
        assert_eq!(m.column(1), &[2.0, 4.0]);
        assert_eq!(m.get(0, 1), 2.0);
    }

    #[test]
    fn hcat_and_select() {
        let a = Matrix::identity(2);
        let b = Matrix::from_columns(&[vec![5.0, 6.0]]).unwrap();
        let c = Matrix::hcat(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), (2, 3));
        assert_eq!(c.select_columns(&[2, 0]).column(0), &[5.0, 6.0]);
    }
}
