use serde::Serialize;

use crate::backward::MSolution;
use crate::error::{Error, Result};
use crate::forward::{ControlBox, ControlProcess};
use crate::linalg::matvec_t_acc;
use crate::process::AdaptedProcess;
use crate::tree::ScenarioTree;

use super::linearize::Linearization;

/// `S(t_k) = E_{t_k}[Σ_{j>k} Y(t_j)·dt]` on levels `0..N−1`.
pub fn forward_sum(sol: &MSolution, tree: &ScenarioTree) -> Result<AdaptedProcess> {
    let steps = tree.steps() as isize;
    let n = sol.y.dim();
    let dt = tree.dt();
    let mut s = tree.zeros(0, steps - 1, n);
    let mut acc = vec![0.0; tree.node_count(steps) * n];
    for k in (0..steps).rev() {
        for (a, y) in acc.iter_mut().zip(sol.y.level(k + 1)) {
            *a += y * dt;
        }
        acc = tree.average_children(&acc, n);
        s.set_level(k, acc.clone())?;
    }
    Ok(s)
}

/// `R(t_k) = Σ_{j>k} Z(t_j, t_k)·dt` on levels `0..N−1` (already
/// `ℱ_{t_k}`-measurable, so no conditioning is needed).
pub fn diagonal_sum(sol: &MSolution, tree: &ScenarioTree) -> Result<AdaptedProcess> {
    let steps = tree.steps();
    let nd = sol.z.dim();
    let dt = tree.dt();
    let mut r = tree.zeros(0, steps as isize - 1, nd);
    for k in 0..steps {
        let out = r.level_mut(k as isize);
        for j in k + 1..=steps {
            for (o, z) in out.iter_mut().zip(sol.z.row(j).level(k as isize)) {
                *o += z * dt;
            }
        }
    }
    Ok(r)
}

/// `h(t_k) = l̄_u + b̄_u'·S(t_k) + Σ_c σ̄_{u,c}'·R_c(t_k)` from the two
/// adjoint aggregates; `R` is `n×d` per node and `R_c` its column `c`.
pub fn gradient_from_aggregates(
    lin: &Linearization,
    s: &AdaptedProcess,
    r: &AdaptedProcess,
    tree: &ScenarioTree,
) -> Result<AdaptedProcess> {
    let n = lin.state_dim();
    let m = lin.control_dim;
    let d = lin.noise_dim();
    let steps = tree.steps() as isize;
    let mut h = lin.l_u.clone();
    let mut col = vec![0.0; n];
    for k in 0..steps {
        for p in 0..tree.node_count(k) {
            let bu = lin.b_u.get(k, p).to_vec();
            let su = lin.sigma_u.get(k, p).to_vec();
            let sv = s.get(k, p).to_vec();
            let rv = r.get(k, p).to_vec();
            let out = h.get_mut(k, p);
            matvec_t_acc(out, &bu, n, m, &sv, 1.0);
            for c in 0..d {
                for row in 0..n {
                    col[row] = rv[row * d + c];
                }
                matvec_t_acc(out, &su[c * n * m..(c + 1) * n * m], n, m, &col, 1.0);
            }
        }
    }
    if h.hi() != steps - 1 {
        return Err(Error::Dimension("control derivative must live on levels 0..N−1".into()));
    }
    Ok(h)
}

/// Maximum-principle gradient along the candidate pair.
pub fn hamiltonian_gradient(sol: &MSolution, lin: &Linearization, tree: &ScenarioTree) -> Result<AdaptedProcess> {
    let s = forward_sum(sol, tree)?;
    let r = diagonal_sum(sol, tree)?;
    gradient_from_aggregates(lin, &s, &r, tree)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ViReport {
    pub pass: bool,
    /// Largest violation over nodes and components; `≤ 0` means slack.
    pub worst_violation: f64,
    pub level: isize,
    pub node: usize,
    pub component: usize,
}

/// Entries within this distance of a bound count as sitting on it.
pub const AT_BOUND_TOL: f64 = 1e-12;

/// `⟨h, u − ū⟩ ≥ 0` on a box reduces to a sign condition per component:
/// `−h_k` at a lower bound, `h_k` at an upper bound, `|h_k|` in the interior.
pub fn check_variational_inequality(
    h: &AdaptedProcess,
    ubar: &ControlProcess,
    bounds: &ControlBox,
    tol: f64,
) -> Result<ViReport> {
    if h.dim() != ubar.dim() || h.dim() != bounds.dim() {
        return Err(Error::Dimension("gradient, control and box dimensions differ".into()));
    }
    let m = h.dim();
    let mut rep = ViReport {
        pass: true,
        worst_violation: f64::NEG_INFINITY,
        level: 0,
        node: 0,
        component: 0,
    };
    for level in h.lo().max(0)..=h.hi() {
        for (node, (hv, uv)) in h.level(level).chunks(m).zip(ubar.level(level).chunks(m)).enumerate() {
            for k in 0..m {
                let at_lo = uv[k] <= bounds.lo()[k] + AT_BOUND_TOL;
                let at_hi = uv[k] >= bounds.hi()[k] - AT_BOUND_TOL;
                let v = match (at_lo, at_hi) {
                    (true, true) => f64::NEG_INFINITY,
                    (true, false) => -hv[k],
                    (false, true) => hv[k],
                    (false, false) => hv[k].abs(),
                };
                if v > rep.worst_violation {
                    rep = ViReport {
                        pass: true,
                        worst_violation: v,
                        level,
                        node,
                        component: k,
                    };
                }
            }
        }
    }
    if rep.worst_violation == f64::NEG_INFINITY {
        rep.worst_violation = 0.0;
    }
    rep.pass = rep.worst_violation <= tol;
    Ok(rep)
}

/// `E Σ_k ⟨h_k, v_k⟩·dt`, the predicted directional derivative.
pub fn gradient_pairing(h: &AdaptedProcess, v: &ControlProcess, tree: &ScenarioTree) -> f64 {
    crate::forward::pairing(h, v, tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;

    fn tree() -> ScenarioTree {
        ScenarioTree::with_default_budget(TimeGrid::new(1.0, 4, 0).unwrap(), 1).unwrap()
    }

    #[test]
    fn vi_sign_conditions() {
        let t = tree();
        let bx = ControlBox::symmetric(1, 1.0);
        let mut h = t.zeros(0, 3, 1);
        let mut u = t.zeros(0, 3, 1);
        assert!(check_variational_inequality(&h, &u, &bx, 1e-9).unwrap().pass);

        h.level_mut(2).fill(1.0);
        u.level_mut(2).fill(-1.0);
        assert!(check_variational_inequality(&h, &u, &bx, 1e-9).unwrap().pass);

        u.level_mut(2).fill(0.3);
        let rep = check_variational_inequality(&h, &u, &bx, 1e-9).unwrap();
        assert!(!rep.pass);
        assert_eq!(rep.level, 2);
        assert_eq!(rep.worst_violation, 1.0);

        u.level_mut(2).fill(1.0);
        let rep = check_variational_inequality(&h, &u, &bx, 1e-9).unwrap();
        assert!(!rep.pass);
    }
}
