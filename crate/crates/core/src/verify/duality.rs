use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::adjoint::{assemble_adjoint, bismut_duality_value, linearize, solve_bismut_adjoint, Linearization};
use crate::backward::{solve_vnbsfe, MSolution, PicardLog, PicardSettings};
use crate::error::Result;
use crate::forward::{
    pairing, perturbation, solve_nsfde, solve_variational, state_cost_derivative, ControlProcess, NsfdeProblem,
};
use crate::linalg::{dot, matvec_acc, matvec_t_acc};
use crate::process::{AdaptedProcess, NodeRef};
use crate::tree::ScenarioTree;

use super::report::{CheckReport, ConfigEcho};

/// Control on levels `0..N−1` with i.i.d. uniform `[−half, half]` entries.
pub fn random_control(tree: &ScenarioTree, dim: usize, seed: u64, half: f64) -> ControlProcess {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = tree.zeros(0, tree.steps() as isize - 1, dim);
    for level in 0..tree.steps() as isize {
        u.level_mut(level).iter_mut().for_each(|x| *x = rng.gen_range(-half..=half));
    }
    u
}

/// The three pieces of the duality argument, each as a pair of
/// forward-side and adjoint-side values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityTerms {
    /// `E Σ ⟨Σ_r Ḡ(t_i,r)χ(t_i−r), Y(t_i)⟩dt` against `E Σ ⟨χ(t_i), J(t_i, Y)⟩dt`.
    pub neutral: (f64, f64),
    /// Drift part of `χ` paired with `Y`, against the `B̄'` part of the driver.
    pub drift: (f64, f64),
    /// Itô part of `χ` paired with `Y`, against the `Σ̄'` part of the driver.
    pub diffusion: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct DualityOutcome {
    pub reports: Vec<CheckReport>,
    pub terms: DualityTerms,
    pub adjoint: MSolution,
    pub picard: PicardLog,
}

/// Per-leaf contributions to the six term values.
fn leaf_terms(lin: &Linearization, chi: &AdaptedProcess, sol: &MSolution, tree: &ScenarioTree, leaf: usize) -> [f64; 6] {
    let k = &lin.kernels;
    let n = k.state_dim;
    let d = k.noise_dim;
    let steps = tree.steps() as isize;
    let dt = tree.dt();
    let at = NodeRef::new(steps, leaf);
    let ms = &k.measures;
    let chi_at = |level: isize| -> Option<&[f64]> { (level >= 0).then(|| chi.value_seen_from(level, at)) };
    let y_at = |level: isize| -> Option<&[f64]> { (level <= sol.y.hi()).then(|| sol.y.value_seen_from(level, at)) };
    let mut out = [0.0; 6];
    let mut drift_acc = vec![0.0; n];
    let mut ito_acc = vec![0.0; n];
    let mut col = vec![0.0; n];
    for i in 0..steps {
        let yi = sol.y.value_seen_from(i, at);
        let xi = chi.value_seen_from(i, at);
        let mut gx = vec![0.0; n];
        let mut gy = vec![0.0; n];
        for (a, atom) in ms.g.atoms().iter().enumerate() {
            let r = atom.lag as isize;
            if let (Some(g), Some(x)) = (k.g_at(i, at, a), chi_at(i - r)) {
                matvec_acc(&mut gx, g, n, n, x, atom.weight);
            }
            if i + r < steps {
                if let (Some(g), Some(y)) = (k.g_at(i + r, at, a), y_at(i + r)) {
                    matvec_t_acc(&mut gy, g, n, n, y, atom.weight);
                }
            }
        }
        out[0] += dot(&gx, yi) * dt;
        out[1] += dot(xi, &gy) * dt;

        out[2] += dot(&drift_acc, yi) * dt;
        out[4] += dot(&ito_acc, yi) * dt;

        let mut by = vec![0.0; n];
        let mut sz = vec![0.0; n];
        for j in i..steps {
            for (a, atom) in ms.b.atoms().iter().enumerate() {
                let r = atom.lag as isize;
                if let (Some(b), Some(y)) = (k.b_at(i + r, at, a), y_at(j + 1 + r)) {
                    matvec_t_acc(&mut by, b, n, n, y, atom.weight);
                }
            }
            for (a, atom) in ms.sigma.atoms().iter().enumerate() {
                let r = atom.lag as isize;
                let (row, colj) = ((j + 1 + r) as usize, (i + r) as usize);
                if row >= sol.z.row_count() {
                    continue;
                }
                let zv = sol.z.seen_from(row, colj, at);
                for c in 0..d {
                    if let Some(s) = k.sigma_at(i + r, at, c, a) {
                        for q in 0..n {
                            col[q] = zv[q * d + c];
                        }
                        matvec_t_acc(&mut sz, s, n, n, &col, atom.weight);
                    }
                }
            }
        }
        out[3] += dot(xi, &by) * dt * dt;
        out[5] += dot(xi, &sz) * dt * dt;

        let mut bx = vec![0.0; n];
        for (a, atom) in ms.b.atoms().iter().enumerate() {
            if let (Some(b), Some(x)) = (k.b_at(i, at, a), chi_at(i - atom.lag as isize)) {
                matvec_acc(&mut bx, b, n, n, x, atom.weight);
            }
        }
        let child = leaf >> (d * (steps - 1 - i) as usize);
        for c in 0..d {
            let mut sx = vec![0.0; n];
            for (a, atom) in ms.sigma.atoms().iter().enumerate() {
                if let (Some(s), Some(x)) = (k.sigma_at(i, at, c, a), chi_at(i - atom.lag as isize)) {
                    matvec_acc(&mut sx, s, n, n, x, atom.weight);
                }
            }
            let dw = tree.increment(child, c);
            for q in 0..n {
                ito_acc[q] += sx[q] * dw;
            }
        }
        for q in 0..n {
            drift_acc[q] += bx[q] * dt;
        }
    }
    out
}

/// Leaf averages of the term decomposition; evaluated pathwise from the
/// kernels and increments, without the generator or the adjoint solver.
pub fn duality_terms(lin: &Linearization, chi: &AdaptedProcess, sol: &MSolution, tree: &ScenarioTree) -> DualityTerms {
    let steps = tree.steps() as isize;
    let per_leaf: Vec<[f64; 6]> = (0..tree.node_count(steps))
        .into_par_iter()
        .map(|leaf| leaf_terms(lin, chi, sol, tree, leaf))
        .collect();
    let mean = |c: usize| {
        let v: Vec<f64> = per_leaf.iter().map(|t| t[c]).collect();
        tree.expectation(&v, 1, steps)[0]
    };
    DualityTerms {
        neutral: (mean(0), mean(1)),
        drift: (mean(2), mean(3)),
        diffusion: (mean(4), mean(5)),
    }
}

/// `I(χ) = E Σ_i Σ_r L̄(t_i,r)χ(t_i−r)dt` against `E Σ_i ⟨ρ(t_i), Y(t_i)⟩dt`,
/// plus the term decomposition and, for undelayed problems without a
/// neutral term, the classical adjoint value as a third evaluation.
pub fn duality_check(
    lin: &Linearization,
    v: &ControlProcess,
    tree: &ScenarioTree,
    picard: &PicardSettings,
    tol: f64,
    config: &ConfigEcho,
) -> Result<DualityOutcome> {
    let chi = solve_variational(lin, v, tree, &Default::default())?.x;
    let lhs = state_cost_derivative(lin, &chi, tree);
    let (gen, term) = assemble_adjoint(lin, tree)?;
    let outcome = solve_vnbsfe(&gen, &term, tree, picard)?;
    let adjoint = outcome.solution;
    let rho = perturbation(lin, v, tree)?;
    let rhs = pairing(&rho, &adjoint.y, tree);
    let terms = duality_terms(lin, &chi, &adjoint, tree);
    let mut reports = vec![
        CheckReport::compare("duality", lhs, rhs, tol, config),
        CheckReport::compare("duality-neutral-term", terms.neutral.0, terms.neutral.1, tol, config),
        CheckReport::compare("duality-drift-term", terms.drift.0, terms.drift.1, tol, config),
        CheckReport::compare("duality-diffusion-term", terms.diffusion.0, terms.diffusion.1, tol, config),
    ];
    if tree.grid().delay_steps() == 0 && lin.kernels.g.max_abs() == 0.0 {
        let ba = solve_bismut_adjoint(lin, tree)?;
        let classical = bismut_duality_value(lin, &ba, v, tree)?;
        reports.push(CheckReport::compare("duality-classical-adjoint", lhs, classical, tol, config));
    }
    Ok(DualityOutcome {
        reports,
        terms,
        adjoint,
        picard: outcome.log,
    })
}

/// [`duality_check`] along the trajectory of `ubar`.
pub fn duality_for_problem(
    problem: &NsfdeProblem,
    ubar: &ControlProcess,
    v: &ControlProcess,
    tree: &ScenarioTree,
    picard: &PicardSettings,
    tol: f64,
    config: &ConfigEcho,
) -> Result<DualityOutcome> {
    let x = solve_nsfde(problem, ubar, tree)?.x;
    let lin = linearize(problem, &x, ubar, tree)?;
    duality_check(&lin, v, tree, picard, tol, config)
}
