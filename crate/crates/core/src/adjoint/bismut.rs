use serde::Serialize;

use crate::backward::MSolution;
use crate::error::{Error, Result};
use crate::forward::ControlProcess;
use crate::linalg::{matvec_acc, matvec_t_acc, max_abs_diff};
use crate::process::{AdaptedProcess, NodeRef};
use crate::tree::ScenarioTree;

use super::gradient::{diagonal_sum, forward_sum};
use super::linearize::Linearization;

/// Classical adjoint pair of the undelayed problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BismutAdjoint {
    /// Levels `0..=N`, `P(T) = 0`.
    pub p: AdaptedProcess,
    /// `n×d` per node on levels `0..N−1`.
    pub q: AdaptedProcess,
}

fn check_undelayed(lin: &Linearization, tree: &ScenarioTree) -> Result<()> {
    if tree.grid().delay_steps() != 0 || lin.grid().delay_steps() != 0 {
        return Err(Error::Precondition(
            "the classical adjoint exists only for the undelayed problem (L = 0)".into(),
        ));
    }
    if lin.grid() != tree.grid() || lin.noise_dim() != tree.brownian_dim() {
        return Err(Error::Precondition("linearization and tree do not match".into()));
    }
    if lin.kernels.g.max_abs() != 0.0 {
        return Err(Error::Precondition(
            "the classical adjoint has no neutral term; g must vanish".into(),
        ));
    }
    Ok(())
}

/// `P(T) = 0`; `Q(t_j)` differences `P(t_{j+1})`;
/// `P(t_j) = E_j P(t_{j+1}) + (B̄'·E_j P(t_{j+1}) + Σ_c Σ̄_c'·Q_c + L̄')·dt`.
pub fn solve_bismut_adjoint(lin: &Linearization, tree: &ScenarioTree) -> Result<BismutAdjoint> {
    check_undelayed(lin, tree)?;
    let k = &lin.kernels;
    let n = k.state_dim;
    let d = k.noise_dim;
    let dt = tree.dt();
    let steps = tree.steps() as isize;
    let mut p = tree.zeros(0, steps, n);
    let mut q = tree.zeros(0, steps - 1, n * d);
    let mut col = vec![0.0; n];
    for j in (0..steps).rev() {
        let next = p.level(j + 1).to_vec();
        q.set_level(j, tree.difference(&next, n))?;
        let mean = tree.average_children(&next, n);
        let mut cur = mean.clone();
        for node in 0..tree.node_count(j) {
            let at = NodeRef::new(j, node);
            let m = &mean[node * n..(node + 1) * n];
            let qv = q.get(j, node).to_vec();
            let out = &mut cur[node * n..(node + 1) * n];
            if let Some(b) = k.b_at(j, at, 0) {
                matvec_t_acc(out, b, n, n, m, dt);
            }
            for c in 0..d {
                if let Some(s) = k.sigma_at(j, at, c, 0) {
                    for r in 0..n {
                        col[r] = qv[r * d + c];
                    }
                    matvec_t_acc(out, s, n, n, &col, dt);
                }
            }
            if let Some(l) = k.cost_at(j, at, 0) {
                for (o, v) in out.iter_mut().zip(l) {
                    *o += v * dt;
                }
            }
        }
        p.set_level(j, cur)?;
    }
    Ok(BismutAdjoint { p, q })
}

/// Largest pathwise gap in `P(t_i) = Σ_{j≥i}(B̄'·E_jP(t_{j+1}) + Σ̄'·Q + L̄')·dt − Σ_{j≥i} Q·ΔW_j`.
pub fn bismut_residual(lin: &Linearization, ba: &BismutAdjoint, tree: &ScenarioTree) -> Result<f64> {
    check_undelayed(lin, tree)?;
    let k = &lin.kernels;
    let n = k.state_dim;
    let d = k.noise_dim;
    let dt = tree.dt();
    let steps = tree.steps() as isize;
    let mut worst = 0.0_f64;
    let mut col = vec![0.0; n];
    let means: Vec<Vec<f64>> = (0..steps).map(|j| tree.average_children(ba.p.level(j + 1), n)).collect();
    for leaf in 0..tree.node_count(steps) {
        let leaf_ref = NodeRef::new(steps, leaf);
        let mut acc = vec![0.0; n];
        for j in (0..steps).rev() {
            let node = leaf >> (d * (steps - 1 - j) as usize + d);
            let child = leaf >> (d * (steps - 1 - j) as usize);
            let at = NodeRef::new(j, node);
            let m = &means[j as usize][node * n..(node + 1) * n];
            let qv = ba.q.get(j, node);
            if let Some(b) = k.b_at(j, at, 0) {
                matvec_t_acc(&mut acc, b, n, n, m, dt);
            }
            for c in 0..d {
                if let Some(s) = k.sigma_at(j, at, c, 0) {
                    for r in 0..n {
                        col[r] = qv[r * d + c];
                    }
                    matvec_t_acc(&mut acc, s, n, n, &col, dt);
                }
                for r in 0..n {
                    acc[r] -= qv[r * d + c] * tree.increment(child, c);
                }
            }
            if let Some(l) = k.cost_at(j, at, 0) {
                for (o, v) in acc.iter_mut().zip(l) {
                    *o += v * dt;
                }
            }
            worst = worst.max(max_abs_diff(&acc, ba.p.value_seen_from(j, leaf_ref)));
        }
    }
    Ok(worst)
}

/// Deviations between the classical adjoint and the Volterra adjoint,
/// all three under the same right Riemann sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Equivalence {
    /// `max |E_{t_i}P(t_{i+1}) − E_{t_i}Σ_{j>i} Y(t_j)·dt|`.
    pub p_next: f64,
    /// `max |P(t_i) − E_{t_i}Σ_{j≥i} Y(t_j)·dt|`.
    pub p_now: f64,
    /// `max |Q(t_i) − Σ_{j>i} Z(t_j, t_i)·dt|`.
    pub q: f64,
}

impl Equivalence {
    pub fn worst(&self) -> f64 {
        self.p_next.max(self.p_now).max(self.q)
    }
}

pub fn equivalence_check(sol: &MSolution, ba: &BismutAdjoint, tree: &ScenarioTree) -> Result<Equivalence> {
    let steps = tree.steps() as isize;
    if tree.grid().delay_steps() != 0 || ba.p.hi() != steps || sol.y.dim() != ba.p.dim() {
        return Err(Error::Precondition("adjoints were solved on different trees".into()));
    }
    let n = ba.p.dim();
    let dt = tree.dt();
    let s = forward_sum(sol, tree)?;
    let r = diagonal_sum(sol, tree)?;
    let mut p_next = 0.0_f64;
    let mut p_now = 0.0_f64;
    let mut q = 0.0_f64;
    for i in 0..steps {
        let mean = tree.cond_expect(ba.p.level(i + 1), n, i + 1, i)?;
        p_next = p_next.max(max_abs_diff(&mean, s.level(i)));
        let now: Vec<f64> = s.level(i).iter().zip(sol.y.level(i)).map(|(a, y)| a + y * dt).collect();
        p_now = p_now.max(max_abs_diff(ba.p.level(i), &now));
        q = q.max(max_abs_diff(ba.q.level(i), r.level(i)));
    }
    Ok(Equivalence { p_next, p_now, q })
}

/// `E Σ_k (⟨E_{t_k}P(t_{k+1}), b̄_u v_k⟩ + ⟨Q(t_k), σ̄_u v_k⟩)·dt`.
pub fn bismut_duality_value(lin: &Linearization, ba: &BismutAdjoint, v: &ControlProcess, tree: &ScenarioTree) -> Result<f64> {
    let n = lin.state_dim();
    let m = lin.control_dim;
    let d = lin.noise_dim();
    let steps = tree.steps() as isize;
    let mut total_value = 0.0;
    for k in 0..steps {
        let mean = tree.cond_expect(ba.p.level(k + 1), n, k + 1, k)?;
        let mut paired = vec![0.0; tree.node_count(k)];
        for (node, out) in paired.iter_mut().enumerate() {
            let vv = v.get(k, node);
            let mut bv = vec![0.0; n];
            matvec_acc(&mut bv, lin.b_u.get(k, node), n, m, vv, 1.0);
            let mut total = crate::linalg::dot(&mean[node * n..(node + 1) * n], &bv);
            let su = lin.sigma_u.get(k, node);
            let qv = ba.q.get(k, node);
            for c in 0..d {
                let mut sv = vec![0.0; n];
                matvec_acc(&mut sv, &su[c * n * m..(c + 1) * n * m], n, m, vv, 1.0);
                for r in 0..n {
                    total += qv[r * d + c] * sv[r];
                }
            }
            *out = total;
        }
        total_value += tree.expectation(&paired, 1, k)[0] * tree.dt();
    }
    Ok(total_value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjoint::linearize::StateKernels;
    use crate::forward::LagMeasures;
    use crate::grid::TimeGrid;

    fn lin_with(tree: &ScenarioTree, b: f64, l: f64) -> Linearization {
        let steps = tree.steps() as isize;
        let fill = |lo: isize, hi: isize, v: f64| {
            let mut p = tree.zeros(lo, hi, 1);
            for k in lo..=hi {
                p.level_mut(k).fill(v);
            }
            p
        };
        Linearization {
            kernels: StateKernels {
                grid: *tree.grid(),
                state_dim: 1,
                noise_dim: 1,
                measures: LagMeasures::all_dirac_zero(),
                g: fill(0, steps, 0.0),
                b: fill(0, steps - 1, b),
                sigma: fill(0, steps - 1, 0.0),
                cost: fill(0, steps - 1, l),
            },
            control_dim: 1,
            b_u: fill(0, steps - 1, 1.0),
            sigma_u: fill(0, steps - 1, 0.0),
            l_u: fill(0, steps - 1, 0.0),
        }
    }

    #[test]
    fn unit_cost_kernel_integrates_time() {
        let tree = ScenarioTree::with_default_budget(TimeGrid::new(1.0, 5, 0).unwrap(), 1).unwrap();
        let lin = lin_with(&tree, 0.0, 1.0);
        let ba = solve_bismut_adjoint(&lin, &tree).unwrap();
        for j in 0..=5 {
            let expected = 1.0 - tree.grid().time(j);
            assert!(ba.p.level(j).iter().all(|p| (p - expected).abs() < 1e-14));
        }
        assert_eq!(ba.q.max_abs(), 0.0);
        assert!(bismut_residual(&lin, &ba, &tree).unwrap() < 1e-14);
    }

    #[test]
    fn linear_drift_recursion() {
        let tree = ScenarioTree::with_default_budget(TimeGrid::new(1.0, 6, 0).unwrap(), 1).unwrap();
        let a = 0.7;
        let lin = lin_with(&tree, a, 1.0);
        let ba = solve_bismut_adjoint(&lin, &tree).unwrap();
        let dt = tree.dt();
        let mut p = 0.0;
        for j in (0..6).rev() {
            p = p + (a * p + 1.0) * dt;
            assert!((ba.p.level(j)[0] - p).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_delays() {
        let tree = ScenarioTree::with_default_budget(TimeGrid::new(1.0, 4, 1).unwrap(), 1).unwrap();
        let lin = lin_with(&tree, 0.0, 1.0);
        assert!(solve_bismut_adjoint(&lin, &tree).is_err());
    }
}
