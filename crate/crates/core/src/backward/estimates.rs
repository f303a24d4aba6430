use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Direction, GridPoint, PathSegment};
use crate::linalg::norm_sq;
use crate::process::NodeRef;
use crate::tree::ScenarioTree;

use super::bsvie::bsde_path;
use super::generator::{Generator, MSolution, TerminalData};
use super::norms::mean_square;

/// Two sides of one inequality `lhs ≤ rhs`, taken where `lhs/rhs` is
/// largest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateReport {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

impl EstimateReport {
    fn hold(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            satisfied: lhs <= rhs + 1e-12 * rhs.abs().max(1.0),
        }
    }

    /// `lhs/rhs`, with `0/0 = 0`.
    pub fn ratio(&self) -> f64 {
        if self.rhs > 0.0 {
            self.lhs / self.rhs
        } else if self.lhs <= 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn worst(self, other: Self) -> Self {
        if other.ratio() > self.ratio() {
            other
        } else {
            self
        }
    }

    fn trivial() -> Self {
        Self::hold(0.0, 0.0)
    }
}

pub fn check_weights(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha > 0.0 && beta > 2.0 / alpha) {
        return Err(Error::Precondition(format!(
            "estimate constants need α > 0 and β > 2/α, got α = {alpha}, β = {beta}"
        )));
    }
    Ok(())
}

fn squares(values: &[f64], dim: usize) -> Vec<f64> {
    values.chunks(dim).map(norm_sq).collect()
}

fn add_scaled(acc: &mut [f64], x: &[f64], s: f64) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += s * b;
    }
}

/// Conditional BSDE estimate at every node of every level `j ≥ i`:
/// `e^{βs_j}|ρ(s_j)|² + E_j Σ_{k≥j} e^{βs_k}|z_k|²·dt ≤ E_j[2e^{βT}|Φ|² + α Σ_{k≥j} e^{βs_k}|h_k|²·dt]`.
pub fn bsde_estimate(
    tree: &ScenarioTree,
    i: usize,
    phi: &[f64],
    h: &[Vec<f64>],
    dim: usize,
    alpha: f64,
    beta: f64,
) -> Result<EstimateReport> {
    check_weights(alpha, beta)?;
    let (rho, z) = bsde_path(tree, i, phi, h, dim)?;
    let steps = tree.steps();
    let grid = tree.grid();
    let dt = tree.dt();
    let d = tree.brownian_dim();
    let w = |k: usize| (beta * grid.time(k as isize)).exp();
    let mut z_acc = vec![0.0; tree.node_count(steps as isize)];
    let mut data = squares(phi, dim);
    data.iter_mut().for_each(|v| *v *= 2.0 * w(steps));
    let mut report = EstimateReport::trivial();
    for j in (i..=steps).rev() {
        let lhs: Vec<f64> = squares(&rho[j - i], dim).iter().zip(&z_acc).map(|(y, s)| w(j) * y + s).collect();
        for (l, r) in lhs.iter().zip(&data) {
            report = report.worst(EstimateReport::hold(*l, *r));
        }
        if j == i {
            break;
        }
        let k = j - 1;
        z_acc = tree.average_children(&z_acc, 1);
        add_scaled(&mut z_acc, &squares(&z[k - i], dim * d), w(k) * dt);
        data = tree.average_children(&data, 1);
        add_scaled(&mut data, &squares(&h[k - i], dim), alpha * w(k) * dt);
    }
    report.satisfied = report.lhs <= report.rhs + 1e-12 * report.rhs.abs().max(1.0);
    Ok(report)
}

/// The unconditional Volterra estimate for row `i`, with the terminal term
/// weighted by `e^{βT}` (first) and as printed without the weight (second).
pub fn bsvie_estimate(
    tree: &ScenarioTree,
    i: usize,
    phi: &[f64],
    h: &[Vec<f64>],
    dim: usize,
    alpha: f64,
    beta: f64,
) -> Result<(EstimateReport, EstimateReport)> {
    check_weights(alpha, beta)?;
    let (rho, z) = bsde_path(tree, i, phi, h, dim)?;
    let steps = tree.steps() as isize;
    let grid = tree.grid();
    let dt = tree.dt();
    let d = tree.brownian_dim();
    let w = |k: isize| (beta * grid.time(k)).exp();
    let ii = i as isize;
    let mut lhs = w(ii) * mean_square(tree, &rho[0], dim, ii);
    let mut drive = 0.0;
    for (off, (zk, hk)) in z.iter().zip(h).enumerate() {
        let k = ii + off as isize;
        lhs += w(k) * mean_square(tree, zk, dim * d, k) * dt;
        drive += alpha * w(k) * mean_square(tree, hk, dim, k) * dt;
    }
    let terminal = mean_square(tree, phi, dim, steps);
    Ok((
        EstimateReport::hold(lhs, w(steps) * terminal + drive),
        EstimateReport::hold(lhs, terminal + drive),
    ))
}

/// Uniform `[−1, 1]` terminal values and driver samples for every row
/// `i = 0..=N`.
pub fn random_bsvie_data(tree: &ScenarioTree, dim: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = tree.steps();
    let leaves = tree.node_count(steps as isize) * dim;
    let mut phi = Vec::with_capacity(steps + 1);
    let mut h = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        phi.push((0..leaves).map(|_| rng.gen_range(-1.0..=1.0)).collect());
        h.push(
            (i..steps)
                .map(|j| (0..tree.node_count(j as isize) * dim).map(|_| rng.gen_range(-1.0..=1.0)).collect())
                .collect(),
        );
    }
    (phi, h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateDiagnostics {
    /// Worst row of the conditional BSDE estimate.
    pub bsde: EstimateReport,
    /// Volterra estimate, `e^{βT}`-weighted terminal term.
    pub volterra_weighted: EstimateReport,
    /// Volterra estimate, unweighted terminal term.
    pub volterra_unweighted: EstimateReport,
    /// Solution norm over data norm; no constant is asserted.
    pub solution_ratio: f64,
}

/// Driver and neutral samples at the zero arguments.
fn zero_data(gen: &dyn Generator, tree: &ScenarioTree) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>) {
    let steps = tree.steps();
    let grid = tree.grid();
    let l = grid.delay_steps();
    let n = gen.dim();
    let d = tree.brownian_dim();
    let yseg = PathSegment::new(Direction::Forward, n, l + 1);
    let dseg = PathSegment::new(Direction::Forward, n * d, l + 1);
    let zero = vec![0.0; n * d];
    let eval_f = |i: usize, j: usize| -> Vec<f64> {
        let level = ((j + 1 + l).min(steps)) as isize;
        let mut vals = vec![0.0; tree.node_count(level) * n];
        for (q, o) in vals.chunks_mut(n).enumerate() {
            gen.driver(grid.point(i as isize), grid.point(j as isize), NodeRef::new(level, q), &yseg, &zero, &dseg, o);
        }
        tree.cond_expect(&vals, n, level, j as isize).expect("coarser level")
    };
    let eval_g = |i: usize| -> Vec<f64> {
        let level = ((i + l).min(steps)) as isize;
        let t: GridPoint = grid.point(i as isize);
        let mut vals = vec![0.0; tree.node_count(level) * n];
        for (q, o) in vals.chunks_mut(n).enumerate() {
            gen.neutral(t, NodeRef::new(level, q), &yseg, o);
        }
        tree.cond_expect(&vals, n, level, i as isize).expect("coarser level")
    };
    let f0 = (0..=steps).map(|i| (i..steps).map(|j| eval_f(i, j)).collect()).collect();
    let g0 = (0..steps).map(eval_g).collect();
    (f0, g0)
}

/// Estimate inequalities observed on a solved equation: the rows
/// `ρ(t_i, ·)` of the last Picard step are bounded by the BSDE and Volterra
/// estimates; the solution-to-data ratio is reported without a verdict.
pub fn estimate_diagnostics(
    sol: &MSolution,
    gen: &dyn Generator,
    term: &TerminalData,
    tree: &ScenarioTree,
    alpha: f64,
    beta: f64,
) -> Result<EstimateDiagnostics> {
    check_weights(alpha, beta)?;
    let steps = tree.steps();
    let n = gen.dim();
    let grid = tree.grid();
    let dt = tree.dt();
    let h = super::picard::driver_table(gen, tree, sol)?;
    let mut bsde = EstimateReport::trivial();
    let mut vw = EstimateReport::trivial();
    let mut vu = EstimateReport::trivial();
    for i in 0..=steps {
        bsde = bsde.worst(bsde_estimate(tree, i, term.at(i), &h[i], n, alpha, beta)?);
        let (a, b) = bsvie_estimate(tree, i, term.at(i), &h[i], n, alpha, beta)?;
        vw = vw.worst(a);
        vu = vu.worst(b);
    }

    let end = sol.z.col_count();
    let mut lhs = 0.0;
    for i in 0..end {
        lhs += mean_square(tree, sol.y.level(i as isize), n, i as isize) * dt;
        for j in i..end {
            lhs += mean_square(tree, sol.z.row(i).level(j as isize), sol.z.dim(), j as isize) * dt * dt;
        }
    }
    let (f0, g0) = zero_data(gen, tree);
    let leaves = steps as isize;
    let mut rhs = 0.0;
    for i in 0..steps {
        rhs += mean_square(tree, term.at(i), n, leaves) * dt;
        rhs += mean_square(tree, &g0[i], n, i as isize) * dt;
        for (off, f) in f0[i].iter().enumerate() {
            rhs += mean_square(tree, f, n, (i + off) as isize) * dt * dt;
        }
    }
    for k in 0..grid.delay_steps() {
        rhs += mean_square(tree, term.at(steps + 1 + k), n, leaves) * dt;
    }
    Ok(EstimateDiagnostics {
        bsde,
        volterra_weighted: vw,
        volterra_unweighted: vu,
        solution_ratio: if rhs > 0.0 { lhs / rhs } else { 0.0 },
    })
}

/// Largest observed Lipschitz quotients of `J` and `F` on random argument
/// pairs, next to the declared constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzProbe {
    pub neutral_observed: f64,
    pub neutral_declared: f64,
    pub driver_observed: f64,
    pub driver_declared: f64,
}

impl LipschitzProbe {
    pub fn consistent(&self, tol: f64) -> bool {
        self.neutral_observed <= self.neutral_declared + tol && self.driver_observed <= self.driver_declared + tol
    }
}

fn random_segment(rng: &mut ChaCha8Rng, dim: usize, lags: usize) -> PathSegment {
    let v: Vec<Vec<f64>> = (0..lags).map(|_| (0..dim).map(|_| rng.gen_range(-2.0..=2.0)).collect()).collect();
    PathSegment::from_lags(Direction::Forward, &v)
}

fn measure_sq(m: &crate::grid::DiscreteLagMeasure, a: &PathSegment, b: &PathSegment) -> f64 {
    m.atoms()
        .iter()
        .map(|at| {
            let d: Vec<f64> = a.lag(at.lag).iter().zip(b.lag(at.lag)).map(|(x, y)| x - y).collect();
            at.weight * norm_sq(&d)
        })
        .sum()
}

/// `|J(φ) − J(φ̄)|² / ∫|φ − φ̄|²dϱ₀` and
/// `|F − F̄|² / (∫|y − ȳ|²dϱ₁ + |z − z̄|² + ∫|ζ − ζ̄|²dϱ₂)` over `samples`
/// random pairs at random grid points and nodes.
pub fn lipschitz_probe(gen: &dyn Generator, tree: &ScenarioTree, samples: usize, seed: u64) -> LipschitzProbe {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = tree.grid();
    let steps = tree.steps();
    let l = grid.delay_steps();
    let n = gen.dim();
    let d = tree.brownian_dim();
    let m = gen.measures();
    let mut neutral_observed = 0.0_f64;
    let mut driver_observed = 0.0_f64;
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    for _ in 0..samples {
        let i = rng.gen_range(0..steps);
        let j = rng.gen_range(i..steps);
        let gl = (i + l).min(steps) as isize;
        let at = NodeRef::new(gl, rng.gen_range(0..tree.node_count(gl)));
        let (p, q) = (random_segment(&mut rng, n, l + 1), random_segment(&mut rng, n, l + 1));
        gen.neutral(grid.point(i as isize), at, &p, &mut a);
        gen.neutral(grid.point(i as isize), at, &q, &mut b);
        let den = measure_sq(&m.neutral, &p, &q);
        if den > 0.0 {
            let num: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
            neutral_observed = neutral_observed.max(num / den);
        }

        let fl = (j + 1 + l).min(steps) as isize;
        let at = NodeRef::new(fl, rng.gen_range(0..tree.node_count(fl)));
        let (p, q) = (random_segment(&mut rng, n, l + 1), random_segment(&mut rng, n, l + 1));
        let za: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-2.0..=2.0)).collect();
        let zb: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-2.0..=2.0)).collect();
        let (da, db) = (random_segment(&mut rng, n * d, l + 1), random_segment(&mut rng, n * d, l + 1));
        let (t, s) = (grid.point(i as isize), grid.point(j as isize));
        gen.driver(t, s, at, &p, &za, &da, &mut a);
        gen.driver(t, s, at, &q, &zb, &db, &mut b);
        let zd: Vec<f64> = za.iter().zip(&zb).map(|(x, y)| x - y).collect();
        let den = measure_sq(&m.forward, &p, &q) + norm_sq(&zd) + measure_sq(&m.diagonal, &da, &db);
        if den > 0.0 {
            let num: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
            driver_observed = driver_observed.max(num / den);
        }
    }
    LipschitzProbe {
        neutral_observed,
        neutral_declared: gen.kappa(),
        driver_observed,
        driver_declared: gen.lipschitz(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backward::generator::{AffineScalarGenerator, PureNeutralGenerator};
    use crate::grid::{DiscreteLagMeasure, TimeGrid};

    fn tree(n: usize) -> ScenarioTree {
        ScenarioTree::with_default_budget(TimeGrid::new(1.0, n, 0).unwrap(), 1).unwrap()
    }

    #[test]
    fn weights_must_satisfy_the_constraint() {
        assert!(check_weights(1.0, 3.0).is_ok());
        assert!(check_weights(1.0, 2.0).is_err());
        assert!(check_weights(0.0, 9.0).is_err());
    }

    #[test]
    fn zero_data_is_tight() {
        let t = tree(3);
        let phi = vec![0.0; 8];
        let h: Vec<Vec<f64>> = (0..3).map(|j| vec![0.0; 1 << j]).collect();
        let r = bsde_estimate(&t, 0, &phi, &h, 1, 1.0, 3.0).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
        assert!(r.satisfied);
    }

    #[test]
    fn random_instances_satisfy_both_estimates() {
        let t = tree(6);
        for seed in 0..10 {
            let (phi, h) = random_bsvie_data(&t, 1, seed);
            for i in 0..=6 {
                assert!(bsde_estimate(&t, i, &phi[i], &h[i], 1, 1.0, 3.0).unwrap().satisfied);
                assert!(bsvie_estimate(&t, i, &phi[i], &h[i], 1, 1.0, 3.0).unwrap().0.satisfied);
            }
        }
    }

    #[test]
    fn probe_respects_declared_constants() {
        let t = tree(4);
        let g = PureNeutralGenerator::new(0.7, 1, DiscreteLagMeasure::dirac(0));
        let p = lipschitz_probe(&g, &t, 200, 3);
        assert!(p.consistent(1e-12), "{p:?}");
        let a = AffineScalarGenerator::new(0.0, 1.5);
        assert!(lipschitz_probe(&a, &t, 200, 3).consistent(1e-12));
    }
}
