//! Independent reference solutions on the same tree.

use crate::backward::{solve_vnbsfe, AffineScalarGenerator, MSolution, PicardSettings, TerminalData};
use crate::error::{Error, Result};
use crate::forward::ControlProcess;
use crate::linalg::max_abs_diff;
use crate::process::AdaptedProcess;
use crate::tree::ScenarioTree;

/// Discrete Riccati solution of `X_{i+1} = X_i + u_i dt + ΔW_i`,
/// `J = E Σ_{i<N} (X_i² + u_i²)dt`, with `V_i(x) = p_i x² + c_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Riccati {
    pub p: Vec<f64>,
    pub c: Vec<f64>,
    pub dt: f64,
}

impl Riccati {
    pub fn solve(steps: usize, dt: f64) -> Self {
        let mut p = vec![0.0; steps + 1];
        let mut c = vec![0.0; steps + 1];
        for i in (0..steps).rev() {
            let q = p[i + 1];
            p[i] = dt + q / (1.0 + q * dt);
            c[i] = c[i + 1] + q * dt;
        }
        Self { p, c, dt }
    }

    pub fn value(&self, x0: f64) -> f64 {
        self.p[0] * x0 * x0 + self.c[0]
    }

    /// `u_i = −p_{i+1}x/(1 + p_{i+1}dt)`.
    pub fn feedback(&self, i: usize, x: f64) -> f64 {
        let q = self.p[i + 1];
        -q * x / (1.0 + q * self.dt)
    }

    /// The optimal control on the tree, started from `x0`.
    pub fn optimal_control(&self, tree: &ScenarioTree, x0: f64) -> Result<ControlProcess> {
        if tree.brownian_dim() != 1 || tree.steps() + 1 != self.p.len() {
            return Err(Error::Precondition("Riccati oracle needs a scalar tree of matching length".into()));
        }
        let steps = tree.steps() as isize;
        let mut u = tree.zeros(0, steps - 1, 1);
        let mut x = vec![x0];
        for i in 0..steps {
            let ui: Vec<f64> = x.iter().map(|xv| self.feedback(i as usize, *xv)).collect();
            let mut next = Vec::with_capacity(tree.node_count(i + 1));
            for child in 0..tree.node_count(i + 1) {
                let p = tree.parent(child);
                next.push(x[p] + ui[p] * self.dt + tree.increment(child, 0));
            }
            u.set_level(i, ui)?;
            x = next;
        }
        Ok(u)
    }
}

/// `y_N = P`, `y_j = (1 + a·dt)·E_j y_{j+1}`.
pub fn bsde_backward_induction(tree: &ScenarioTree, payoff: &[f64], rate: f64) -> Result<AdaptedProcess> {
    let steps = tree.steps() as isize;
    let mut y = tree.zeros(0, steps, 1);
    y.set_level(steps, payoff.to_vec())?;
    for j in (0..steps).rev() {
        let mean = tree.average_children(y.level(j + 1), 1);
        y.set_level(j, mean.into_iter().map(|m| (1.0 + rate * tree.dt()) * m).collect())?;
    }
    Ok(y)
}

/// Volterra solve of `Y(t) = E_t[P + Σ_{j≥i} a·Y(s_{j+1})dt]` with the
/// oracle on levels `0..=N`, and the sup-norm gap between the two.
pub fn bsde_reduction_gap(
    tree: &ScenarioTree,
    payoff: &[f64],
    rate: f64,
    picard: &PicardSettings,
) -> Result<(MSolution, f64)> {
    if tree.grid().delay_steps() != 0 {
        return Err(Error::Precondition("the BSDE reduction needs an undelayed grid".into()));
    }
    let gen = AffineScalarGenerator::new(0.0, rate);
    let term = TerminalData::constant_payoff(tree, payoff.to_vec(), 1)?;
    let sol = solve_vnbsfe(&gen, &term, tree, picard)?.solution;
    let oracle = bsde_backward_induction(tree, payoff, rate)?;
    let gap = (0..=tree.steps() as isize)
        .map(|j| max_abs_diff(sol.y.level(j), oracle.level(j)))
        .fold(0.0, f64::max);
    Ok((sol, gap))
}

/// A smooth payoff of the terminal Brownian value.
pub fn smooth_payoff(tree: &ScenarioTree) -> Vec<f64> {
    tree.brownian(tree.steps()).iter().map(|w| w.sin() + 0.5 * w * w).collect()
}
