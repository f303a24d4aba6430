use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{segment_view, Direction, Extension, PathSegment};
use crate::linalg::max_abs_diff;
use crate::process::{AdaptedProcess, NodeRef};
use crate::tree::ScenarioTree;

use super::problem::{ControlProcess, NeutralSettings, NsfdeProblem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolved {
    pub iterations: usize,
    pub residual: f64,
}

/// Fixed point `x = D + g(segment(x))` by iteration from `x₀ = D`.
///
/// `window` carries the known history on lags `1..=L`; on success its lag-0
/// entry holds the endpoint `x`. Failures are reported with level and node
/// zero; callers that know the node relabel them.
pub fn neutral_resolve<G>(
    d: &[f64],
    window: &mut PathSegment,
    mut g: G,
    settings: &NeutralSettings,
) -> Result<Resolved>
where
    G: FnMut(&PathSegment, &mut [f64]),
{
    let n = d.len();
    let mut gx = vec![0.0; n];
    let mut x = d.to_vec();
    window.lag_mut(0).copy_from_slice(&x);
    g(window, &mut gx);
    let mut residual = f64::INFINITY;
    for it in 1..=settings.max_iter {
        for k in 0..n {
            x[k] = d[k] + gx[k];
        }
        window.lag_mut(0).copy_from_slice(&x);
        g(window, &mut gx);
        residual = (0..n).fold(0.0_f64, |m, k| m.max((x[k] - d[k] - gx[k]).abs()));
        if residual <= settings.tol {
            return Ok(Resolved {
                iterations: it,
                residual,
            });
        }
        if !residual.is_finite() {
            break;
        }
    }
    Err(Error::NeutralResolve {
        level: 0,
        node: 0,
        residual,
        iterations: settings.max_iter,
    })
}

fn relabel(e: Error, level: isize, node: usize) -> Error {
    match e {
        Error::NeutralResolve {
            residual,
            iterations,
            ..
        } => Error::NeutralResolve {
            level,
            node,
            residual,
            iterations,
        },
        other => other,
    }
}

/// State path together with the semimartingale part `D = X − g(t, X^t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSolution {
    /// Levels `−L..=N`.
    pub x: AdaptedProcess,
    /// Levels `0..=N`.
    pub d: AdaptedProcess,
}

pub(crate) fn history_process(tree: &ScenarioTree, initial: &[Vec<f64>], dim: usize) -> AdaptedProcess {
    let l = tree.grid().delay_steps() as isize;
    let mut x = tree.zeros(-l, tree.steps() as isize, dim);
    for (k, v) in initial.iter().enumerate() {
        x.level_mut(k as isize - l).copy_from_slice(v);
    }
    x
}

/// Generic level-synchronous neutral scheme shared by the state and the
/// variational equations.
///
/// `increments(i, node, window)` returns the drift (`n`) and diffusion
/// (`n×d`) at a level-`i` node; `neutral(i, node, window, out)` evaluates the
/// neutral term at a level-`i` node.
pub(crate) fn neutral_scheme<I, G>(
    tree: &ScenarioTree,
    mut x: AdaptedProcess,
    settings: &NeutralSettings,
    increments: I,
    neutral: G,
) -> Result<ForwardSolution>
where
    I: Fn(usize, usize, &PathSegment) -> (Vec<f64>, Vec<f64>) + Sync,
    G: Fn(usize, usize, &PathSegment, &mut [f64]) + Sync,
{
    let grid = *tree.grid();
    let n = x.dim();
    let d = tree.brownian_dim();
    let steps = tree.steps();
    let dt = tree.dt();
    let mut dproc = tree.zeros(0, steps as isize, n);

    let view = |x: &AdaptedProcess, level: usize, node: usize| {
        segment_view(
            x,
            &grid,
            level as isize,
            NodeRef::new(level as isize, node),
            Direction::Backward,
            Extension::Zero,
        )
    };

    let w0 = view(&x, 0, 0);
    let mut g0 = vec![0.0; n];
    neutral(0, 0, &w0, &mut g0);
    let d0: Vec<f64> = x.level(0).iter().zip(&g0).map(|(a, b)| a - b).collect();
    dproc.set_level(0, d0)?;

    for i in 0..steps {
        let parents = tree.node_count(i as isize);
        let xref = &x;
        let dref = &dproc;
        let results: Vec<Result<Vec<(Vec<f64>, Vec<f64>)>>> = (0..parents)
            .into_par_iter()
            .map(|p| {
                let win = view(xref, i, p);
                let (drift, diff) = increments(i, p, &win);
                let dp = dref.get(i as isize, p);
                tree.children(p)
                    .map(|child| {
                        let mut dc = dp.to_vec();
                        for r in 0..n {
                            let mut acc = drift[r] * dt;
                            for c in 0..d {
                                acc += diff[r * d + c] * tree.increment(child, c);
                            }
                            dc[r] += acc;
                        }
                        let mut w = segment_view(
                            xref,
                            &grid,
                            i as isize + 1,
                            NodeRef::new(i as isize + 1, child),
                            Direction::Backward,
                            Extension::Zero,
                        );
                        neutral_resolve(&dc, &mut w, |s, out| neutral(i + 1, child, s, out), settings)
                            .map_err(|e| relabel(e, i as isize + 1, child))?;
                        Ok((w.lag(0).to_vec(), dc))
                    })
                    .collect()
            })
            .collect();
        let mut xs = Vec::with_capacity(parents * tree.branching() * n);
        let mut ds = Vec::with_capacity(parents * tree.branching() * n);
        for r in results {
            for (xv, dv) in r? {
                xs.extend_from_slice(&xv);
                ds.extend_from_slice(&dv);
            }
        }
        x.set_level(i as isize + 1, xs)?;
        dproc.set_level(i as isize + 1, ds)?;
    }
    Ok(ForwardSolution { x, d: dproc })
}

/// Solves the controlled neutral equation on the tree.
pub fn solve_nsfde(problem: &NsfdeProblem, u: &ControlProcess, tree: &ScenarioTree) -> Result<ForwardSolution> {
    problem.check_tree(tree)?;
    problem.check_control(tree, u)?;
    let c = problem.coefficients.as_ref();
    let n = c.state_dim();
    let d = c.noise_dim();
    let grid = problem.grid;
    let x = history_process(tree, &problem.initial, n);
    neutral_scheme(
        tree,
        x,
        &problem.neutral,
        |i, p, win| {
            let t = grid.point(i as isize);
            let uv = u.get(i as isize, p);
            let mut drift = vec![0.0; n];
            let mut diff = vec![0.0; n * d];
            c.b(t, win, uv, &mut drift);
            c.sigma(t, win, uv, &mut diff);
            (drift, diff)
        },
        |i, _, win, out| c.g(grid.point(i as isize), win, out),
    )
}

/// `E Σ_{i<N} l(t_i, X^{t_i}, u_i)·dt` as an exact tree average.
pub fn eval_cost(problem: &NsfdeProblem, x: &AdaptedProcess, u: &ControlProcess, tree: &ScenarioTree) -> Result<f64> {
    problem.check_control(tree, u)?;
    let c = problem.coefficients.as_ref();
    let grid = problem.grid;
    let mut total = 0.0;
    for i in 0..tree.steps() {
        let t = grid.point(i as isize);
        let vals: Vec<f64> = (0..tree.node_count(i as isize))
            .into_par_iter()
            .map(|p| {
                let win = segment_view(
                    x,
                    &grid,
                    i as isize,
                    NodeRef::new(i as isize, p),
                    Direction::Backward,
                    Extension::Zero,
                );
                c.running_cost(t, &win, u.get(i as isize, p))
            })
            .collect();
        total += tree.expectation(&vals, 1, i as isize)[0] * tree.dt();
    }
    Ok(total)
}

/// `X_i − g(t_i, X^{t_i})` recomputed from a state path alone.
pub fn neutral_part(problem: &NsfdeProblem, x: &AdaptedProcess, tree: &ScenarioTree) -> AdaptedProcess {
    let c = problem.coefficients.as_ref();
    let grid = problem.grid;
    let n = c.state_dim();
    let mut out = tree.zeros(0, tree.steps() as isize, n);
    for i in 0..=tree.steps() as isize {
        let level = out.level_mut(i);
        let mut gx = vec![0.0; n];
        for (p, chunk) in level.chunks_mut(n).enumerate() {
            let win = segment_view(x, &grid, i, NodeRef::new(i, p), Direction::Backward, Extension::Zero);
            c.g(grid.point(i), &win, &mut gx);
            for ((o, xv), gv) in chunk.iter_mut().zip(x.get(i, p)).zip(&gx) {
                *o = xv - gv;
            }
        }
    }
    out
}

/// Largest nodewise gap between two state paths on their common levels.
pub fn path_distance(a: &AdaptedProcess, b: &AdaptedProcess) -> f64 {
    let mut m = 0.0_f64;
    for l in a.lo().max(b.lo())..=a.hi().min(b.hi()) {
        m = m.max(max_abs_diff(a.level(l), b.level(l)));
    }
    m
}
