//! The two-parameter field `Z(t_i, s_j)` of an M-solution.

use crate::error::{Error, Result};
use crate::process::{AdaptedProcess, NodeRef};

/// Where a grid pair `(i, j)` lies relative to the triangles of the backward
/// horizon `[0, T+δ]²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// `0 ≤ i ≤ j ≤ N`: determined by the backward equation.
    Upper,
    /// `j < i`: determined by the martingale representation of `Y(t_i)`.
    Lower,
    /// `i ≤ j`, `j > N`: pinned to zero.
    Zero,
}

/// Rows `i = 0..=N+L`; row `i` is adapted in its second index `j = 0..N+L−1`
/// (column `j` is stored at tree level `min(j, N)`), values in `ℝ^{n×d}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoParamProcess {
    steps: usize,
    delay_steps: usize,
    rows: Vec<AdaptedProcess>,
}

impl TwoParamProcess {
    pub fn zeros(brownian_dim: usize, steps: usize, delay_steps: usize, dim: usize) -> Self {
        let last_col = (steps + delay_steps) as isize - 1;
        let rows = (0..=steps + delay_steps)
            .map(|_| AdaptedProcess::zeros(brownian_dim, steps, 0, last_col, dim))
            .collect();
        Self {
            steps,
            delay_steps,
            rows,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn col_count(&self) -> usize {
        self.steps + self.delay_steps
    }

    pub fn dim(&self) -> usize {
        self.rows[0].dim()
    }

    pub fn region(&self, i: usize, j: usize) -> Region {
        if j < i {
            Region::Lower
        } else if j <= self.steps {
            Region::Upper
        } else {
            Region::Zero
        }
    }

    pub fn row(&self, i: usize) -> &AdaptedProcess {
        &self.rows[i]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut AdaptedProcess {
        &mut self.rows[i]
    }

    pub fn try_row(&self, i: usize) -> Result<&AdaptedProcess> {
        self.rows.get(i).ok_or_else(|| {
            Error::Precondition(format!("row {i} outside 0..={}", self.rows.len() - 1))
        })
    }

    /// `Z(t_i, s_j)` at node `node` of level `min(j, N)`.
    pub fn get(&self, i: usize, j: usize, node: usize) -> &[f64] {
        self.rows[i].get(j as isize, node)
    }

    /// `Z(t_i, s_j)` on the path through `at`.
    pub fn seen_from(&self, i: usize, j: usize, at: NodeRef) -> &[f64] {
        self.rows[i].value_seen_from(j as isize, at)
    }

    /// Largest absolute entry over the pairs of the given region.
    pub fn max_abs_in(&self, region: Region) -> f64 {
        let mut m = 0.0_f64;
        for i in 0..self.row_count() {
            for j in 0..self.col_count() {
                if self.region(i, j) == region {
                    m = m.max(crate::linalg::max_abs(self.rows[i].level(j as isize)));
                }
            }
        }
        m
    }

    pub fn max_abs_diff(&self, other: &TwoParamProcess) -> f64 {
        self.rows
            .iter()
            .zip(&other.rows)
            .fold(0.0_f64, |m, (a, b)| m.max(a.max_abs_diff(b)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regions_partition_the_square() {
        let z = TwoParamProcess::zeros(1, 3, 2, 1);
        assert_eq!(z.row_count(), 6);
        assert_eq!(z.col_count(), 5);
        assert_eq!(z.region(0, 0), Region::Upper);
        assert_eq!(z.region(1, 3), Region::Upper);
        assert_eq!(z.region(2, 1), Region::Lower);
        assert_eq!(z.region(0, 4), Region::Zero);
        assert_eq!(z.region(5, 4), Region::Lower);
        assert_eq!(z.row(0).node_count(4), 8);
    }
}
