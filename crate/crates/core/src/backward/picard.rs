use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{segment_view, Direction, Extension, PathSegment};
use crate::process::{effective_level, AdaptedProcess, NodeRef};
use crate::tree::ScenarioTree;
use crate::two_param::{Region, TwoParamProcess};

use super::bsvie::{bsvie_identity_error, solve_bsvie_row};
use super::generator::{Generator, MSolution, TerminalData};
use super::norms::weighted_update_norm;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Initialization {
    /// `Y⁰ = 0` on `[0, T]`, `ξ` beyond, `Z⁰` completed from `Y⁰`.
    Zero,
    /// Uniform `[−1, 1]` entries everywhere, from a seeded ChaCha stream.
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Weight `e^{βt}` of the update norm.
    pub beta: f64,
    pub init: Initialization,
}

impl Default for PicardSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            beta: 3.0,
            init: Initialization::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PicardStep {
    pub iteration: usize,
    /// Weighted norm of `Γ(Y, Z) − (Y, Z)`.
    pub update_norm: f64,
    /// Largest nodewise change of `Y` or `Z`.
    pub sup_update: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct PicardLog {
    pub steps: Vec<PicardStep>,
    pub converged: bool,
}

impl PicardLog {
    pub fn iterations(&self) -> usize {
        self.steps.len()
    }
}

/// Successive update norms and the ratios of consecutive ones.
pub fn picard_residual(log: &PicardLog) -> (Vec<f64>, Vec<f64>) {
    let norms: Vec<f64> = log.steps.iter().map(|s| s.update_norm).collect();
    let ratios = norms.windows(2).map(|w| w[1] / w[0]).collect();
    (norms, ratios)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardOutcome {
    pub solution: MSolution,
    pub log: PicardLog,
}

fn check_inputs(gen: &dyn Generator, term: &TerminalData, tree: &ScenarioTree) -> Result<()> {
    if tree.brownian_dim() != 1 || gen.noise_dim() != 1 {
        return Err(Error::Dimension(
            "the backward solver needs a single Brownian component (exact martingale representation)".into(),
        ));
    }
    let k = gen.kappa();
    if !(0.0..1.0).contains(&k) {
        return Err(Error::NotContractive(k));
    }
    let l = tree.grid().delay_steps();
    let m = gen.measures();
    m.neutral.check_support(l)?;
    m.forward.check_support(l)?;
    m.diagonal.check_support(l)?;
    term.check(tree, gen.dim())
}

/// `h(t_i, s_j) = E_{s_j}[F(t_i, s_j, ·)]` at level `j` for `j = i..N−1`.
fn driver_samples(gen: &dyn Generator, tree: &ScenarioTree, cur: &MSolution, i: usize) -> Result<Vec<Vec<f64>>> {
    let grid = *tree.grid();
    let n = gen.dim();
    let d = tree.brownian_dim();
    let steps = tree.steps();
    let l = grid.delay_steps();
    let diag_atoms = gen.measures().diagonal.atoms();
    let mut out = Vec::with_capacity(steps - i);
    for j in i..steps {
        if !gen.has_driver() {
            out.push(vec![0.0; tree.node_count(j as isize) * n]);
            continue;
        }
        let level = effective_level(steps, (j + 1 + l) as isize) as isize;
        let t = grid.point(i as isize);
        let s = grid.point(j as isize);
        let mut vals = vec![0.0; tree.node_count(level) * n];
        for (q, o) in vals.chunks_mut(n).enumerate() {
            let at = NodeRef::new(level, q);
            let y = segment_view(&cur.y, &grid, (j + 1) as isize, at, Direction::Forward, Extension::Zero);
            let z = cur.z.seen_from(i, j, at);
            let mut diag = PathSegment::new(Direction::Forward, n * d, l + 1);
            for a in diag_atoms {
                let col = i + a.lag;
                if col < steps {
                    diag.lag_mut(a.lag).copy_from_slice(cur.z.seen_from(j + 1 + a.lag, col, at));
                }
            }
            gen.driver(t, s, at, &y, z, &diag, o);
        }
        out.push(tree.cond_expect(&vals, n, level, j as isize)?);
    }
    Ok(out)
}

/// Driver samples of every row `i = 0..=N` at the iterate `cur`.
pub(crate) fn driver_table(gen: &dyn Generator, tree: &ScenarioTree, cur: &MSolution) -> Result<Vec<Vec<Vec<f64>>>> {
    (0..=tree.steps())
        .into_par_iter()
        .map(|i| driver_samples(gen, tree, cur, i))
        .collect()
}

/// `E_{t_i}[J(t_i, Y_{t_i})]` at level `i`.
fn neutral_sample(gen: &dyn Generator, tree: &ScenarioTree, y: &AdaptedProcess, i: usize) -> Result<Vec<f64>> {
    let n = gen.dim();
    if !gen.has_neutral() {
        return Ok(vec![0.0; tree.node_count(i as isize) * n]);
    }
    let grid = *tree.grid();
    let level = effective_level(tree.steps(), (i + grid.delay_steps()) as isize) as isize;
    let t = grid.point(i as isize);
    let mut vals = vec![0.0; tree.node_count(level) * n];
    for (q, o) in vals.chunks_mut(n).enumerate() {
        let at = NodeRef::new(level, q);
        let seg = segment_view(y, &grid, i as isize, at, Direction::Forward, Extension::Zero);
        gen.neutral(t, at, &seg, o);
    }
    tree.cond_expect(&vals, n, level, i as isize)
}

/// Fills `Z(t_i, s_j)` for `j < i` from the martingale representation of
/// `Y(t_i)` and zeroes every column `j ≥ N` (there is no noise after `T`).
pub fn complete_m_solution(tree: &ScenarioTree, y: &AdaptedProcess, z: &mut TwoParamProcess) -> Result<()> {
    let steps = tree.steps();
    let n = y.dim();
    let reps: Vec<Result<AdaptedProcess>> = (0..z.row_count())
        .into_par_iter()
        .map(|i| {
            let level = i as isize;
            Ok(tree.martingale_represent(y.try_level(level)?, n, level)?.integrand)
        })
        .collect();
    let zero_cols: Vec<usize> = (steps..z.col_count()).collect();
    for (i, rep) in reps.into_iter().enumerate() {
        let rep = rep?;
        let row = z.row_mut(i);
        for j in 0..i.min(steps) {
            row.set_level(j as isize, rep.level(j as isize).to_vec())?;
        }
        for &j in &zero_cols {
            row.level_mut(j as isize).fill(0.0);
        }
    }
    Ok(())
}

fn terminal_levels(tree: &ScenarioTree, term: &TerminalData, y: &mut AdaptedProcess) -> Result<()> {
    let steps = tree.steps();
    for (k, xi) in term.xi.iter().enumerate() {
        y.set_level((steps + 1 + k) as isize, xi.clone())?;
    }
    Ok(())
}

/// One application of the contraction map `Γ`.
pub fn picard_map(gen: &dyn Generator, term: &TerminalData, tree: &ScenarioTree, cur: &MSolution) -> Result<MSolution> {
    let steps = tree.steps();
    let l = tree.grid().delay_steps();
    let n = gen.dim();
    let d = tree.brownian_dim();
    let rows: Vec<Result<(Vec<f64>, Vec<Vec<f64>>)>> = (0..=steps)
        .into_par_iter()
        .map(|i| {
            let h = driver_samples(gen, tree, cur, i)?;
            let (mut yi, zi) = solve_bsvie_row(tree, i, term.at(i), &h, n)?;
            let ej = neutral_sample(gen, tree, &cur.y, i)?;
            for (a, b) in yi.iter_mut().zip(&ej) {
                *a += b;
            }
            Ok((yi, zi))
        })
        .collect();
    let mut y = tree.zeros(0, (steps + l) as isize, n);
    let mut z = TwoParamProcess::zeros(d, steps, l, n * d);
    for (i, r) in rows.into_iter().enumerate() {
        let (yi, zi) = r?;
        y.set_level(i as isize, yi)?;
        for (off, zj) in zi.into_iter().enumerate() {
            z.row_mut(i).set_level((i + off) as isize, zj)?;
        }
    }
    terminal_levels(tree, term, &mut y)?;
    complete_m_solution(tree, &y, &mut z)?;
    Ok(MSolution { y, z })
}

/// The starting point of the iteration.
pub fn initial_iterate(gen: &dyn Generator, term: &TerminalData, tree: &ScenarioTree, init: Initialization) -> Result<MSolution> {
    let steps = tree.steps();
    let l = tree.grid().delay_steps();
    let n = gen.dim();
    let d = tree.brownian_dim();
    let mut y = tree.zeros(0, (steps + l) as isize, n);
    let mut z = TwoParamProcess::zeros(d, steps, l, n * d);
    match init {
        Initialization::Zero => {
            terminal_levels(tree, term, &mut y)?;
            complete_m_solution(tree, &y, &mut z)?;
        }
        Initialization::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for level in 0..=(steps + l) as isize {
                y.level_mut(level).iter_mut().for_each(|v| *v = rng.gen_range(-1.0..=1.0));
            }
            for i in 0..z.row_count() {
                for j in 0..z.col_count() {
                    z.row_mut(i)
                        .level_mut(j as isize)
                        .iter_mut()
                        .for_each(|v| *v = rng.gen_range(-1.0..=1.0));
                }
            }
        }
    }
    Ok(MSolution { y, z })
}

fn sup_update(a: &MSolution, b: &MSolution) -> f64 {
    a.y.max_abs_diff(&b.y).max(a.z.max_abs_diff(&b.z))
}

/// Picard iteration from the configured initialization.
pub fn solve_vnbsfe(gen: &dyn Generator, term: &TerminalData, tree: &ScenarioTree, settings: &PicardSettings) -> Result<PicardOutcome> {
    check_inputs(gen, term, tree)?;
    let start = initial_iterate(gen, term, tree, settings.init)?;
    solve_vnbsfe_from(gen, term, tree, settings, start)
}

/// Picard iteration from a given iterate.
///
/// Stops once both the weighted update norm and the largest nodewise update
/// fall below `tol`. A generator with `J ≡ 0` and `F ≡ 0` makes `Γ` constant,
/// so a single sweep is exact.
pub fn solve_vnbsfe_from(
    gen: &dyn Generator,
    term: &TerminalData,
    tree: &ScenarioTree,
    settings: &PicardSettings,
    start: MSolution,
) -> Result<PicardOutcome> {
    check_inputs(gen, term, tree)?;
    let constant = !gen.has_neutral() && !gen.has_driver();
    let mut cur = start;
    let mut log = PicardLog::default();
    for iteration in 1..=settings.max_iter.max(1) {
        let next = picard_map(gen, term, tree, &cur)?;
        let update_norm = weighted_update_norm(&next, &cur, tree, settings.beta);
        let sup = sup_update(&next, &cur);
        log.steps.push(PicardStep {
            iteration,
            update_norm,
            sup_update: sup,
        });
        cur = next;
        if !update_norm.is_finite() || !sup.is_finite() {
            return Err(Error::PicardDiverged {
                iterations: iteration,
                last_update: update_norm,
            });
        }
        if constant || (update_norm < settings.tol && sup < settings.tol) {
            log.converged = true;
            return Ok(PicardOutcome { solution: cur, log });
        }
    }
    Err(Error::PicardDiverged {
        iterations: settings.max_iter,
        last_update: log.steps.last().map_or(f64::NAN, |s| s.update_norm),
    })
}

/// Largest pathwise gap in
/// `Y(t_i) − E_{t_i}[J] − Ψ(t_i) − Σ_{j≥i} f·dt + Σ_{j≥i} Z(t_i,s_j)·ΔW_j`
/// over `i = 0..=N` and all leaves, with `f` and `J` evaluated at `sol` itself.
pub fn equation_residual(gen: &dyn Generator, term: &TerminalData, tree: &ScenarioTree, sol: &MSolution) -> Result<f64> {
    check_inputs(gen, term, tree)?;
    let steps = tree.steps();
    let n = gen.dim();
    let parts: Vec<Result<(Vec<f64>, Vec<Vec<f64>>)>> = (0..=steps)
        .into_par_iter()
        .map(|i| {
            let h = driver_samples(gen, tree, sol, i)?;
            let ej = neutral_sample(gen, tree, &sol.y, i)?;
            let ytilde: Vec<f64> = sol.y.level(i as isize).iter().zip(&ej).map(|(a, b)| a - b).collect();
            Ok((ytilde, h))
        })
        .collect();
    let mut ytilde = tree.zeros(0, steps as isize, n);
    let mut h = Vec::with_capacity(steps + 1);
    for (i, p) in parts.into_iter().enumerate() {
        let (yt, hi) = p?;
        ytilde.set_level(i as isize, yt)?;
        h.push(hi);
    }
    let phi: Vec<Vec<f64>> = term.psi.clone();
    Ok(bsvie_identity_error(tree, &phi, &h, &ytilde, &sol.z))
}

/// Largest nodewise error of `Y(t_i) = E[Y(t_i)] + Σ_{j<i} Z(t_i,s_j)·ΔW_j`
/// over every level, together with the largest entry of `Z` on the zero
/// region.
pub fn m_condition_error(tree: &ScenarioTree, sol: &MSolution) -> Result<(f64, f64)> {
    let steps = tree.steps();
    let n = sol.y.dim();
    let d = tree.brownian_dim();
    let mut worst = 0.0_f64;
    for i in 1..sol.z.row_count() {
        let level = i as isize;
        let values = sol.y.try_level(level)?;
        let mean = tree.expectation(values, n, level);
        let top = i.min(steps);
        let mut integrand = tree.zeros(0, top as isize - 1, n * d);
        for j in 0..top {
            integrand.set_level(j as isize, sol.z.row(i).level(j as isize).to_vec())?;
        }
        let rebuilt = tree.reconstruct(&mean, &integrand, level)?;
        worst = worst.max(crate::linalg::max_abs_diff(&rebuilt, values));
    }
    Ok((worst, sol.z.max_abs_in(Region::Zero)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backward::generator::{AffineScalarGenerator, PureNeutralGenerator};
    use crate::grid::{DiscreteLagMeasure, TimeGrid};

    fn tree(n: usize, l: usize) -> ScenarioTree {
        ScenarioTree::with_default_budget(TimeGrid::new(1.0, n, l).unwrap(), 1).unwrap()
    }

    #[test]
    fn constant_generator_takes_one_sweep() {
        let t = tree(3, 1);
        let psi: Vec<Vec<f64>> = (0..=3).map(|i| vec![1.0 + i as f64]).collect();
        let term = TerminalData::deterministic(&t, &psi, &[vec![0.5]]).unwrap();
        let gen = AffineScalarGenerator::new(0.0, 0.0);
        let out = solve_vnbsfe(&gen, &term, &t, &PicardSettings::default()).unwrap();
        assert!(out.log.converged);
        assert_eq!(out.log.iterations(), 1);
        for i in 0..=3 {
            assert!(out.solution.y.level(i).iter().all(|&v| v == 1.0 + i as f64));
        }
        assert!(out.solution.y.level(4).iter().all(|&v| v == 0.5));
        assert_eq!(out.solution.z.max_abs_diff(&TwoParamProcess::zeros(1, 3, 1, 1)), 0.0);
    }

    #[test]
    fn constant_neutral_shift() {
        let t = tree(4, 0);
        let term = TerminalData::deterministic(&t, &vec![vec![2.0]; 5], &[]).unwrap();
        let gen = AffineScalarGenerator::new(0.25, 0.0);
        let out = solve_vnbsfe(&gen, &term, &t, &PicardSettings::default()).unwrap();
        for i in 0..=4 {
            assert!(out.solution.y.level(i).iter().all(|v| (v - 2.25).abs() < 1e-15));
        }
    }

    #[test]
    fn zero_region_and_m_condition() {
        let t = tree(4, 2);
        let gen = PureNeutralGenerator::new(0.5, 1, DiscreteLagMeasure::uniform(&[0, 2]).unwrap());
        let payoff = t.brownian(4).iter().map(|w| w * w).collect();
        let term = TerminalData::constant_payoff(&t, payoff, 1).unwrap();
        let out = solve_vnbsfe(&gen, &term, &t, &PicardSettings::default()).unwrap();
        let (err, zero) = m_condition_error(&t, &out.solution).unwrap();
        assert!(err < 1e-12, "{err}");
        assert_eq!(zero, 0.0);
        let res = equation_residual(&gen, &term, &t, &out.solution).unwrap();
        assert!(res < 1e-9, "{res}");
    }

    #[test]
    fn random_start_reaches_same_solution() {
        let t = tree(3, 1);
        let gen = PureNeutralGenerator::new(0.6, 1, DiscreteLagMeasure::uniform(&[0, 1]).unwrap());
        let payoff = t.brownian(3);
        let term = TerminalData::constant_payoff(&t, payoff, 1).unwrap();
        let a = solve_vnbsfe(&gen, &term, &t, &PicardSettings::default()).unwrap();
        let settings = PicardSettings {
            init: Initialization::Random { seed: 9 },
            ..Default::default()
        };
        let b = solve_vnbsfe(&gen, &term, &t, &settings).unwrap();
        assert!(sup_update(&a.solution, &b.solution) < 1e-9);
    }

    #[test]
    fn rejects_non_contractive_and_two_factor() {
        let t = tree(3, 0);
        let term = TerminalData::zeros(&t, 1);
        let gen = PureNeutralGenerator::new(1.0, 1, DiscreteLagMeasure::dirac(0));
        assert!(matches!(
            solve_vnbsfe(&gen, &term, &t, &PicardSettings::default()),
            Err(Error::NotContractive(_))
        ));
        let t2 = ScenarioTree::with_default_budget(TimeGrid::new(1.0, 3, 0).unwrap(), 2).unwrap();
        let term2 = TerminalData::zeros(&t2, 1);
        let gen2 = AffineScalarGenerator::new(0.0, 1.0);
        assert!(matches!(
            solve_vnbsfe(&gen2, &term2, &t2, &PicardSettings::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn completion_of_known_processes() {
        let t = tree(3, 0);
        let mut y = t.zeros(0, 3, 1);
        y.set_level(2, t.brownian(2)).unwrap();
        let mut z = TwoParamProcess::zeros(1, 3, 0, 1);
        complete_m_solution(&t, &y, &mut z).unwrap();
        assert!(z.row(2).level(0).iter().all(|&v| (v - 1.0).abs() < 1e-14));
        assert!(z.row(2).level(1).iter().all(|&v| (v - 1.0).abs() < 1e-14));

        let sq: Vec<f64> = t.brownian(2).iter().map(|w| w * w).collect();
        y.set_level(2, sq).unwrap();
        complete_m_solution(&t, &y, &mut z).unwrap();
        assert!(z.row(2).level(0)[0].abs() < 1e-14);
        let w1 = t.brownian(1);
        for (zv, w) in z.row(2).level(1).iter().zip(&w1) {
            assert!((zv - 2.0 * w).abs() < 1e-14);
        }
    }
}
