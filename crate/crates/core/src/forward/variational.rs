use rayon::prelude::*;

use crate::adjoint::{linearize, Linearization};
use crate::error::{Error, Result};
use crate::grid::{segment_view, Direction, Extension};
use crate::linalg::{matvec_acc, max_abs};
use crate::process::{AdaptedProcess, NodeRef};
use crate::tree::ScenarioTree;

use super::problem::{ControlProcess, NeutralSettings, NsfdeProblem};
use super::solve::{eval_cost, neutral_scheme, solve_nsfde, ForwardSolution};

fn check_direction(lin: &Linearization, v: &ControlProcess, tree: &ScenarioTree) -> Result<()> {
    let n = tree.steps() as isize;
    if v.dim() != lin.control_dim || v.lo() > 0 || v.hi() < n - 1 {
        return Err(Error::Dimension(format!(
            "direction must carry {} components on levels 0..={}",
            lin.control_dim,
            n - 1
        )));
    }
    if lin.noise_dim() != tree.brownian_dim() || lin.grid() != tree.grid() {
        return Err(Error::Precondition("linearization and tree do not match".into()));
    }
    Ok(())
}

/// First-order sensitivity `χ` of the state in direction `v`: the linear
/// neutral equation with kernels sampled along the nominal pair and zero
/// initial path.
pub fn solve_variational(
    lin: &Linearization,
    v: &ControlProcess,
    tree: &ScenarioTree,
    settings: &NeutralSettings,
) -> Result<ForwardSolution> {
    check_direction(lin, v, tree)?;
    let k = &lin.kernels;
    let n = k.state_dim;
    let m = lin.control_dim;
    let d = k.noise_dim;
    let l = tree.grid().delay_steps() as isize;
    let chi = tree.zeros(-l, tree.steps() as isize, n);
    neutral_scheme(
        tree,
        chi,
        settings,
        |i, p, win| {
            let level = i as isize;
            let at = NodeRef::new(level, p);
            let mut drift = vec![0.0; n];
            for (a, atom) in k.measures.b.atoms().iter().enumerate() {
                if let Some(bk) = k.b_at(level, at, a) {
                    matvec_acc(&mut drift, bk, n, n, win.lag(atom.lag), atom.weight);
                }
            }
            let vv = v.get(level, p);
            matvec_acc(&mut drift, lin.b_u.get(level, p), n, m, vv, 1.0);
            let mut diff = vec![0.0; n * d];
            let su = lin.sigma_u.get(level, p);
            for c in 0..d {
                let mut col = vec![0.0; n];
                for (a, atom) in k.measures.sigma.atoms().iter().enumerate() {
                    if let Some(sk) = k.sigma_at(level, at, c, a) {
                        matvec_acc(&mut col, sk, n, n, win.lag(atom.lag), atom.weight);
                    }
                }
                matvec_acc(&mut col, &su[c * n * m..(c + 1) * n * m], n, m, vv, 1.0);
                for r in 0..n {
                    diff[r * d + c] = col[r];
                }
            }
            (drift, diff)
        },
        |i, p, win, out| {
            out.fill(0.0);
            let level = i as isize;
            for (a, atom) in k.measures.g.atoms().iter().enumerate() {
                if let Some(gk) = k.g_at(level, NodeRef::new(level, p), a) {
                    matvec_acc(out, gk, n, n, win.lag(atom.lag), atom.weight);
                }
            }
        },
    )
}

/// `ρ(t_i) = Σ_{k<i} b̄_u v_k·dt + σ̄_u v_k·ΔW_k` on levels `0..=N`.
pub fn perturbation(lin: &Linearization, v: &ControlProcess, tree: &ScenarioTree) -> Result<AdaptedProcess> {
    check_direction(lin, v, tree)?;
    let n = lin.state_dim();
    let m = lin.control_dim;
    let d = lin.noise_dim();
    let steps = tree.steps() as isize;
    let mut drift = tree.zeros(0, steps - 1, n);
    let mut diff = tree.zeros(0, steps - 1, n * d);
    for level in 0..steps {
        for p in 0..tree.node_count(level) {
            let vv = v.get(level, p).to_vec();
            matvec_acc(drift.get_mut(level, p), lin.b_u.get(level, p), n, m, &vv, 1.0);
            let su = lin.sigma_u.get(level, p).to_vec();
            let out = diff.get_mut(level, p);
            for c in 0..d {
                let mut col = vec![0.0; n];
                matvec_acc(&mut col, &su[c * n * m..(c + 1) * n * m], n, m, &vv, 1.0);
                for r in 0..n {
                    out[r * d + c] = col[r];
                }
            }
        }
    }
    let mut rho = tree.ito_integrate(&diff, 0, tree.steps())?;
    let dt = tree.dt();
    let mut acc = vec![0.0; n];
    for level in 1..=steps {
        let prev = drift.level(level - 1);
        let mut next = Vec::with_capacity(tree.node_count(level) * n);
        for child in 0..tree.node_count(level) {
            let p = tree.parent(child);
            for r in 0..n {
                next.push(acc[p * n + r] + prev[p * n + r] * dt);
            }
        }
        for (x, a) in rho.level_mut(level).iter_mut().zip(&next) {
            *x += a;
        }
        acc = next;
    }
    Ok(rho)
}

/// `E Σ_{i<N} Σ_k w_k L̄(t_i, r_k) χ(t_{i−r_k})·dt`, the state part of the
/// cost derivative.
pub fn state_cost_derivative(lin: &Linearization, chi: &AdaptedProcess, tree: &ScenarioTree) -> f64 {
    let k = &lin.kernels;
    let grid = *tree.grid();
    let mut total = 0.0;
    for i in 0..tree.steps() as isize {
        let vals: Vec<f64> = (0..tree.node_count(i))
            .into_par_iter()
            .map(|p| {
                let at = NodeRef::new(i, p);
                let win = segment_view(chi, &grid, i, at, Direction::Backward, Extension::Zero);
                let mut s = 0.0;
                for (a, atom) in k.measures.cost.atoms().iter().enumerate() {
                    if let Some(lk) = k.cost_at(i, at, a) {
                        s += atom.weight * crate::linalg::dot(lk, win.lag(atom.lag));
                    }
                }
                s
            })
            .collect();
        total += tree.expectation(&vals, 1, i)[0] * tree.dt();
    }
    total
}

/// `E Σ_{i<N} ⟨l̄_u(t_i), v_i⟩·dt`.
pub fn control_cost_derivative(lin: &Linearization, v: &ControlProcess, tree: &ScenarioTree) -> f64 {
    pairing(&lin.l_u, v, tree)
}

/// `E Σ_{i<N} ⟨a_i, b_i⟩·dt` for two processes of equal dimension.
pub fn pairing(a: &AdaptedProcess, b: &AdaptedProcess, tree: &ScenarioTree) -> f64 {
    let dim = a.dim();
    let mut total = 0.0;
    for i in 0..tree.steps() as isize {
        let vals: Vec<f64> = a
            .level(i)
            .chunks(dim)
            .zip(b.level(i).chunks(dim))
            .map(|(x, y)| crate::linalg::dot(x, y))
            .collect();
        total += tree.expectation(&vals, 1, i)[0] * tree.dt();
    }
    total
}

/// `ū + ε·v`, not projected.
pub fn shifted_control(ubar: &ControlProcess, v: &ControlProcess, eps: f64) -> ControlProcess {
    let mut u = ubar.clone();
    u.axpy(eps, v);
    u
}

/// One row of a first-order expansion table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionRow {
    pub epsilon: f64,
    /// `(E sup_i |X_ε − X̄ − εχ|²)^{1/2}`.
    pub state_remainder: f64,
    /// `|J(ū+εv) − J(ū) − ε·dJ(ū; v)|`.
    pub cost_remainder: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionTable {
    pub rows: Vec<ExpansionRow>,
    pub directional_derivative: f64,
}

/// `E sup_i |a_i − b_i − ε c_i|²`, taken along every root-to-leaf path.
fn sup_remainder(a: &AdaptedProcess, b: &AdaptedProcess, c: &AdaptedProcess, eps: f64, tree: &ScenarioTree) -> f64 {
    let steps = tree.steps() as isize;
    let dim = a.dim();
    let leaves = tree.node_count(steps);
    let sq: Vec<f64> = (0..leaves)
        .map(|leaf| {
            let at = NodeRef::new(steps, leaf);
            (0..=steps)
                .map(|i| {
                    let (x, y, z) = (a.value_seen_from(i, at), b.value_seen_from(i, at), c.value_seen_from(i, at));
                    (0..dim).map(|r| (x[r] - y[r] - eps * z[r]).powi(2)).sum::<f64>()
                })
                .fold(0.0_f64, f64::max)
        })
        .collect();
    tree.expectation(&sq, 1, steps)[0]
}

/// Remainders of the first-order expansion of the state and of the cost
/// along `ū + ε·v` for each `ε`. The control box is not enforced.
pub fn first_order_check(
    problem: &NsfdeProblem,
    ubar: &ControlProcess,
    v: &ControlProcess,
    epsilons: &[f64],
    tree: &ScenarioTree,
) -> Result<ExpansionTable> {
    if epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) || epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Precondition("epsilons must be positive and strictly decreasing".into()));
    }
    let nominal = solve_nsfde(problem, ubar, tree)?;
    let lin = linearize(problem, &nominal.x, ubar, tree)?;
    let chi = solve_variational(&lin, v, tree, &problem.neutral)?.x;
    let j0 = eval_cost(problem, &nominal.x, ubar, tree)?;
    let dj = state_cost_derivative(&lin, &chi, tree) + control_cost_derivative(&lin, v, tree);
    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let u = shifted_control(ubar, v, eps);
        let xe = solve_nsfde(problem, &u, tree)?.x;
        let je = eval_cost(problem, &xe, &u, tree)?;
        rows.push(ExpansionRow {
            epsilon: eps,
            state_remainder: sup_remainder(&xe, &nominal.x, &chi, eps, tree).sqrt(),
            cost_remainder: (je - j0 - eps * dj).abs(),
        });
    }
    Ok(ExpansionTable {
        rows,
        directional_derivative: dj,
    })
}

/// Largest nodewise value of a process on levels `0..=N`.
pub fn sup_norm(p: &AdaptedProcess) -> f64 {
    (p.lo().max(0)..=p.hi()).map(|l| max_abs(p.level(l))).fold(0.0, f64::max)
}
