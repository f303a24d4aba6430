use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::{ControlProcess, LagMeasures, NsfdeProblem};
use crate::grid::{segment_view, Direction, Extension, TimeGrid};
use crate::process::{AdaptedProcess, NodeRef};
use crate::tree::ScenarioTree;

/// Derivative kernels of the state coefficients sampled along a trajectory.
///
/// `g` lives on levels `0..=N`, the others on `0..N−1`; every kernel is read
/// as zero outside its stored range (in particular `L̄(t,·) = 0` for `t ≥ T`).
#[derive(Debug, Clone, PartialEq)]
pub struct StateKernels {
    pub grid: TimeGrid,
    pub state_dim: usize,
    pub noise_dim: usize,
    pub measures: LagMeasures,
    /// `atoms(λ₀)·n·n` per node.
    pub g: AdaptedProcess,
    /// `atoms(λ₁)·n·n` per node.
    pub b: AdaptedProcess,
    /// `d·atoms(λ₂)·n·n` per node, component-major.
    pub sigma: AdaptedProcess,
    /// `atoms(λ₃)·n` per node.
    pub cost: AdaptedProcess,
}

fn block(p: &AdaptedProcess, level: isize, at: NodeRef, k: usize, size: usize) -> Option<&[f64]> {
    if p.contains_level(level) {
        let v = p.value_seen_from(level, at);
        Some(&v[k * size..(k + 1) * size])
    } else {
        None
    }
}

impl StateKernels {
    /// `Ḡ(t_level, r_k)` (`n×n`) on the path through `at`, for atom `k` of
    /// `λ₀`; `None` outside the sampled levels.
    pub fn g_at(&self, level: isize, at: NodeRef, k: usize) -> Option<&[f64]> {
        let n = self.state_dim;
        block(&self.g, level, at, k, n * n)
    }

    pub fn b_at(&self, level: isize, at: NodeRef, k: usize) -> Option<&[f64]> {
        let n = self.state_dim;
        block(&self.b, level, at, k, n * n)
    }

    /// `Σ̄_c(t_level, r_k)` for Brownian component `c`.
    pub fn sigma_at(&self, level: isize, at: NodeRef, c: usize, k: usize) -> Option<&[f64]> {
        let n = self.state_dim;
        let atoms = self.measures.sigma.len();
        block(&self.sigma, level, at, c * atoms + k, n * n)
    }

    /// `L̄(t_level, r_k)` as a length-`n` row.
    pub fn cost_at(&self, level: isize, at: NodeRef, k: usize) -> Option<&[f64]> {
        block(&self.cost, level, at, k, self.state_dim)
    }

    /// Largest Frobenius norm of `Σ_k w_k |Ḡ(t, r_k)|` over sampled nodes.
    pub fn neutral_bound(&self) -> f64 {
        let n = self.state_dim;
        let atoms = self.measures.g.atoms();
        let mut worst = 0.0_f64;
        for level in self.g.lo()..=self.g.hi() {
            for chunk in self.g.level(level).chunks(atoms.len() * n * n) {
                let s: f64 = atoms
                    .iter()
                    .enumerate()
                    .map(|(k, a)| a.weight * crate::linalg::norm_sq(&chunk[k * n * n..(k + 1) * n * n]).sqrt())
                    .sum();
                worst = worst.max(s);
            }
        }
        worst
    }
}

/// Everything the adjoint and the gradient need from a candidate pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub kernels: StateKernels,
    pub control_dim: usize,
    /// `b̄_u`, `n×m` per node on levels `0..N−1`.
    pub b_u: AdaptedProcess,
    /// `σ̄_u`, `d` blocks of `n×m` per node.
    pub sigma_u: AdaptedProcess,
    /// `l̄_u`, length `m` per node.
    pub l_u: AdaptedProcess,
}

impl Linearization {
    pub fn grid(&self) -> &TimeGrid {
        &self.kernels.grid
    }

    pub fn state_dim(&self) -> usize {
        self.kernels.state_dim
    }

    pub fn noise_dim(&self) -> usize {
        self.kernels.noise_dim
    }
}

/// Samples the analytic derivative kernels along `(X̄, ū)`.
pub fn linearize(
    problem: &NsfdeProblem,
    xbar: &AdaptedProcess,
    ubar: &ControlProcess,
    tree: &ScenarioTree,
) -> Result<Linearization> {
    problem.check_tree(tree)?;
    problem.check_control(tree, ubar)?;
    let der = problem
        .coefficients
        .derivatives()
        .ok_or(Error::MissingDerivatives)?;
    let grid = problem.grid;
    let n = problem.state_dim();
    let m = problem.control_dim();
    let d = problem.noise_dim();
    let steps = tree.steps() as isize;
    let measures = der.lag_measures().clone();
    measures.check_support(grid.delay_steps())?;
    let (a0, a1, a2, a3) = (
        measures.g.len(),
        measures.b.len(),
        measures.sigma.len(),
        measures.cost.len(),
    );

    let view = |level: isize, node: usize| {
        segment_view(xbar, &grid, level, NodeRef::new(level, node), Direction::Backward, Extension::Zero)
    };

    let mut g = tree.zeros(0, steps, a0 * n * n);
    for level in 0..=steps {
        let t = grid.point(level);
        let vals: Vec<f64> = (0..tree.node_count(level))
            .into_par_iter()
            .flat_map_iter(|p| {
                let mut out = vec![0.0; a0 * n * n];
                der.g_kernel(t, &view(level, p), &mut out);
                out
            })
            .collect();
        g.set_level(level, vals)?;
    }

    let sizes = [a1 * n * n, d * a2 * n * n, a3 * n, n * m, d * n * m, m];
    let mut procs: Vec<AdaptedProcess> = sizes.iter().map(|&s| tree.zeros(0, steps - 1, s)).collect();
    for level in 0..steps {
        let t = grid.point(level);
        let per_node: Vec<Vec<Vec<f64>>> = (0..tree.node_count(level))
            .into_par_iter()
            .map(|p| {
                let win = view(level, p);
                let u = ubar.get(level, p);
                let mut outs: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![0.0; s]).collect();
                der.b_kernel(t, &win, u, &mut outs[0]);
                der.sigma_kernel(t, &win, u, &mut outs[1]);
                der.l_kernel(t, &win, u, &mut outs[2]);
                der.b_u(t, &win, u, &mut outs[3]);
                der.sigma_u(t, &win, u, &mut outs[4]);
                der.l_u(t, &win, u, &mut outs[5]);
                outs
            })
            .collect();
        for (q, proc) in procs.iter_mut().enumerate() {
            let vals: Vec<f64> = per_node.iter().flat_map(|o| o[q].iter().copied()).collect();
            proc.set_level(level, vals)?;
        }
    }
    let mut it = procs.into_iter();
    let mut next = || it.next().expect("six sampled processes");
    let (b, sigma, cost, b_u, sigma_u, l_u) = (next(), next(), next(), next(), next(), next());
    Ok(Linearization {
        kernels: StateKernels {
            grid,
            state_dim: n,
            noise_dim: d,
            measures,
            g,
            b,
            sigma,
            cost,
        },
        control_dim: m,
        b_u,
        sigma_u,
        l_u,
    })
}
