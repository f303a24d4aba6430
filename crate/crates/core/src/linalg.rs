//! Small dense helpers over row-major slices. State dimensions here are tiny
//! (n, m, d ≤ a handful), so nothing fancier is warranted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `y += a · x` for a row-major `rows × cols` matrix `a`.
pub fn matvec_acc(y: &mut [f64], a: &[f64], rows: usize, cols: usize, x: &[f64], scale: f64) {
    debug_assert_eq!(a.len(), rows * cols);
    for (r, yr) in y.iter_mut().enumerate().take(rows) {
        let row = &a[r * cols..(r + 1) * cols];
        let mut s = 0.0;
        for (aij, xj) in row.iter().zip(x) {
            s += aij * xj;
        }
        *yr += scale * s;
    }
}

/// `y += aᵀ · x` for a row-major `rows × cols` matrix `a` (so `x` has `rows`
/// entries and `y` has `cols`).
pub fn matvec_t_acc(y: &mut [f64], a: &[f64], rows: usize, cols: usize, x: &[f64], scale: f64) {
    debug_assert_eq!(a.len(), rows * cols);
    for (r, xr) in x.iter().enumerate().take(rows) {
        let row = &a[r * cols..(r + 1) * cols];
        for (yc, arc) in y.iter_mut().zip(row) {
            *yc += scale * arc * xr;
        }
    }
}

pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Dense matrix as it appears in configuration documents: a list of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Matrix(pub Vec<Vec<f64>>);

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix(vec![vec![0.0; cols]; rows])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.0[i][i] = 1.0;
        }
        m
    }

    pub fn scalar(v: f64) -> Self {
        Matrix(vec![vec![v]])
    }

    pub fn rows(&self) -> usize {
        self.0.len()
    }

    pub fn cols(&self) -> usize {
        self.0.first().map_or(0, Vec::len)
    }

    pub fn check_shape(&self, rows: usize, cols: usize, what: &str) -> Result<()> {
        if self.rows() != rows || self.0.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension(format!(
                "{what}: expected {rows}x{cols} matrix, got {}x{}",
                self.rows(),
                self.cols()
            )));
        }
        Ok(())
    }

    /// Row-major flattening.
    pub fn flat(&self) -> Vec<f64> {
        self.0.iter().flatten().copied().collect()
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }
}
