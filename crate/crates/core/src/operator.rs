//! Matrix-free access to a real measurement ensemble `{a_i}`.

use crate::error::{check_len, Error, Result};

/// A real measurement operator `x -> (a_i^T x)_i` with `m` rows and `n`
/// columns.
///
/// Only [`num_rows`](Self::num_rows), [`num_cols`](Self::num_cols),
/// [`row_inner`](Self::row_inner) and
/// [`adjoint_weighted`](Self::adjoint_weighted) are required. Every sum over
/// rows runs sequentially in row order so results are bit-stable.
pub trait MeasurementOperator: Sync {
    fn num_rows(&self) -> usize;
    fn num_cols(&self) -> usize;

    /// `a_i^T x`.
    fn row_inner(&self, i: usize, x: &[f64]) -> f64;

    /// `(1/m) sum_i w_i a_i`.
    fn adjoint_weighted(&self, w: &[f64]) -> Result<Vec<f64>>;

    /// `(a_i^T x)_i`.
    fn apply_linear(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("apply_linear", self.num_cols(), x.len())?;
        Ok((0..self.num_rows()).map(|i| self.row_inner(i, x)).collect())
    }

    /// Amplitudes `|a_i^T x|`.
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.apply_linear(x)?;
        z.iter_mut().for_each(|v| *v = v.abs());
        Ok(z)
    }

    /// `(1/m) sum_i d_i (a_i^T v) a_i`.
    fn quadratic_form_apply(&self, d: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        check_len("quadratic_form_apply: weights", self.num_rows(), d.len())?;
        let mut z = self.apply_linear(v)?;
        z.iter_mut().zip(d).for_each(|(zi, di)| *zi *= di);
        self.adjoint_weighted(&z)
    }
}

/// Row-major dense `m x n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseOperator {
    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidDimension(format!(
                "operator must have at least one row and column, got {rows}x{cols}"
            )));
        }
        check_len("DenseOperator::from_rows", rows * cols, data.len())?;
        Ok(DenseOperator { rows, cols, data })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

impl MeasurementOperator for DenseOperator {
    fn num_rows(&self) -> usize {
        self.rows
    }

    fn num_cols(&self) -> usize {
        self.cols
    }

    #[inline]
    fn row_inner(&self, i: usize, x: &[f64]) -> f64 {
        self.row(i).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    fn adjoint_weighted(&self, w: &[f64]) -> Result<Vec<f64>> {
        check_len("adjoint_weighted", self.rows, w.len())?;
        let mut out = vec![0.0; self.cols];
        for (row, &wi) in self.data.chunks_exact(self.cols).zip(w) {
            if wi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(row) {
                *o += wi * a;
            }
        }
        let scale = 1.0 / self.rows as f64;
        out.iter_mut().for_each(|o| *o *= scale);
        Ok(out)
    }
}
