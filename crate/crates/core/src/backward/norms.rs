use serde::Serialize;

use crate::linalg::norm_sq;
use crate::tree::ScenarioTree;
use crate::two_param::TwoParamProcess;

use super::generator::MSolution;

/// `E|V|²` of a level-`level` variable.
pub(crate) fn mean_square(tree: &ScenarioTree, values: &[f64], dim: usize, level: isize) -> f64 {
    let sq: Vec<f64> = values.chunks(dim).map(norm_sq).collect();
    tree.expectation(&sq, 1, level)[0]
}

fn z_mean_square(tree: &ScenarioTree, z: &TwoParamProcess, i: usize, j: usize) -> f64 {
    mean_square(tree, z.row(i).level(j as isize), z.dim(), j as isize)
}

/// `(Σ_{i=0}^{N} e^{βt_i} E|ΔY_i|²·dt + Σ_{i≤j<N} e^{βs_j} E|ΔZ(t_i,s_j)|²·dt²)^{1/2}`,
/// the weighted norm of the contraction argument applied to `a − b`.
pub fn weighted_update_norm(a: &MSolution, b: &MSolution, tree: &ScenarioTree, beta: f64) -> f64 {
    let steps = tree.steps();
    let dt = tree.dt();
    let grid = tree.grid();
    let n = a.y.dim();
    let mut total = 0.0;
    for i in 0..=steps {
        let level = i as isize;
        let diff: Vec<f64> = a.y.level(level).iter().zip(b.y.level(level)).map(|(x, y)| x - y).collect();
        total += (beta * grid.time(level)).exp() * mean_square(tree, &diff, n, level) * dt;
        for j in i..steps {
            let col = j as isize;
            let za = a.z.row(i).level(col);
            let zb = b.z.row(i).level(col);
            let diff: Vec<f64> = za.iter().zip(zb).map(|(x, y)| x - y).collect();
            total += (beta * grid.time(col)).exp() * mean_square(tree, &diff, a.z.dim(), col) * dt * dt;
        }
    }
    total.sqrt()
}

/// Both squared norms of an M-solution on `[0, T+δ)` and the slacks of
/// `‖·‖²_ℋ ≤ 2‖·‖²_𝕄 ≤ 2‖·‖²_ℋ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormEquivalence {
    pub h_sq: f64,
    pub m_sq: f64,
    /// `2‖·‖²_𝕄 − ‖·‖²_ℋ`.
    pub lower_slack: f64,
    /// `2‖·‖²_ℋ − 2‖·‖²_𝕄`.
    pub upper_slack: f64,
}

impl NormEquivalence {
    pub fn holds(&self, tol: f64) -> bool {
        self.lower_slack >= -tol && self.upper_slack >= -tol
    }
}

/// `ℋ²` carries `Z` on the whole square, `𝕄²` only on `j ≥ i`; both weight
/// time `s` by `e^{βs}`.
pub fn norm_equivalence(sol: &MSolution, tree: &ScenarioTree, beta: f64) -> NormEquivalence {
    let grid = tree.grid();
    let dt = tree.dt();
    let n = sol.y.dim();
    let end = sol.z.col_count();
    let mut y_part = 0.0;
    let mut upper = 0.0;
    let mut lower = 0.0;
    for i in 0..end {
        let level = i as isize;
        y_part += (beta * grid.time(level)).exp() * mean_square(tree, sol.y.level(level), n, level) * dt;
        for j in 0..end {
            let w = (beta * grid.time(j as isize)).exp() * z_mean_square(tree, &sol.z, i, j) * dt * dt;
            if j >= i {
                upper += w;
            } else {
                lower += w;
            }
        }
    }
    let h_sq = y_part + upper + lower;
    let m_sq = y_part + upper;
    NormEquivalence {
        h_sq,
        m_sq,
        lower_slack: 2.0 * m_sq - h_sq,
        upper_slack: 2.0 * h_sq - 2.0 * m_sq,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::backward::picard::complete_m_solution;

    #[test]
    fn equivalence_on_a_completed_pair() {
        let tree = ScenarioTree::with_default_budget(TimeGrid::new(1.0, 4, 1).unwrap(), 1).unwrap();
        let mut y = tree.zeros(0, 5, 1);
        for level in 0..=5 {
            let w: Vec<f64> = tree.brownian(level.min(4) as usize).iter().map(|w| w.sin() + 1.0).collect();
            y.set_level(level, w).unwrap();
        }
        let mut z = TwoParamProcess::zeros(1, 4, 1, 1);
        complete_m_solution(&tree, &y, &mut z).unwrap();
        let sol = MSolution { y, z };
        for beta in [0.0, 3.0] {
            let e = norm_equivalence(&sol, &tree, beta);
            assert!(e.holds(1e-12), "{e:?}");
            assert!(e.h_sq > e.m_sq);
        }
        assert_eq!(weighted_update_norm(&sol, &sol, &tree, 3.0), 0.0);
    }
}
