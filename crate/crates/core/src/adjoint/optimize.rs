use serde::{Deserialize, Serialize};

use crate::backward::{solve_vnbsfe, MSolution, PicardSettings};
use crate::error::{Error, Result};
use crate::forward::{eval_cost, pairing, solve_nsfde, ControlProcess, NsfdeProblem};
use crate::process::AdaptedProcess;
use crate::tree::ScenarioTree;

use super::assemble::assemble_adjoint;
use super::gradient::{check_variational_inequality, hamiltonian_gradient, ViReport};
use super::linearize::{linearize, Linearization};

/// Everything computed along one candidate control.
#[derive(Debug, Clone)]
pub struct GradientEval {
    pub cost: f64,
    pub state: AdaptedProcess,
    pub linearization: Linearization,
    pub adjoint: MSolution,
    pub gradient: AdaptedProcess,
}

/// Forward solve, cost, linearization, adjoint solve and gradient.
pub fn evaluate_gradient(
    problem: &NsfdeProblem,
    u: &ControlProcess,
    tree: &ScenarioTree,
    picard: &PicardSettings,
) -> Result<GradientEval> {
    let state = solve_nsfde(problem, u, tree)?.x;
    let cost = eval_cost(problem, &state, u, tree)?;
    let linearization = linearize(problem, &state, u, tree)?;
    let (gen, term) = assemble_adjoint(&linearization, tree)?;
    let adjoint = solve_vnbsfe(&gen, &term, tree, picard)?.solution;
    let gradient = hamiltonian_gradient(&adjoint, &linearization, tree)?;
    Ok(GradientEval {
        cost,
        state,
        linearization,
        adjoint,
        gradient,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule", deny_unknown_fields)]
pub enum StepRule {
    Fixed { eta: f64 },
    /// Armijo search: each iteration starts from `min(2η_prev, η₀)` and halves
    /// until `J(u⁺) ≤ J(u) + c·⟨h, u⁺ − u⟩`.
    Backtracking { eta0: f64, armijo: f64, max_halvings: usize },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Backtracking {
            eta0: 1.0,
            armijo: 1e-4,
            max_halvings: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSettings {
    pub max_iter: usize,
    pub step: StepRule,
    pub vi_tol: f64,
    pub picard: PicardSettings,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iter: 500,
            step: StepRule::default(),
            vi_tol: 1e-6,
            picard: PicardSettings::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub control: ControlProcess,
    /// `J` at the start and after every accepted step.
    pub costs: Vec<f64>,
    pub vi: ViReport,
    pub iterations: usize,
    pub converged: bool,
}

fn step(u: &ControlProcess, h: &AdaptedProcess, eta: f64, problem: &NsfdeProblem) -> ControlProcess {
    let mut next = u.clone();
    next.axpy(-eta, h);
    problem.control_box.project(&next)
}

fn wrap(iteration: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Optimizer {
        iteration,
        source: Box::new(e),
    }
}

/// Projected gradient descent `u ← Proj_U(u − η·h)`, stopping once the
/// variational inequality holds at `vi_tol`.
pub fn projected_gradient_descent(
    problem: &NsfdeProblem,
    u0: &ControlProcess,
    tree: &ScenarioTree,
    settings: &OptimizerSettings,
) -> Result<OptimizeOutcome> {
    let mut u = problem.control_box.project(u0);
    let mut eval = evaluate_gradient(problem, &u, tree, &settings.picard).map_err(wrap(0))?;
    let mut costs = vec![eval.cost];
    let mut eta_prev = match settings.step {
        StepRule::Fixed { eta } => eta,
        StepRule::Backtracking { eta0, .. } => eta0,
    };
    for iteration in 0..=settings.max_iter {
        let vi = check_variational_inequality(&eval.gradient, &u, &problem.control_box, settings.vi_tol)
            .map_err(wrap(iteration))?;
        if vi.pass || iteration == settings.max_iter {
            return Ok(OptimizeOutcome {
                control: u,
                costs,
                vi,
                iterations: iteration,
                converged: vi.pass,
            });
        }
        let next = match settings.step {
            StepRule::Fixed { eta } => {
                let cand = step(&u, &eval.gradient, eta, problem);
                let e = evaluate_gradient(problem, &cand, tree, &settings.picard).map_err(wrap(iteration + 1))?;
                Some((cand, e))
            }
            StepRule::Backtracking {
                eta0,
                armijo,
                max_halvings,
            } => {
                let mut eta = (2.0 * eta_prev).min(eta0);
                let mut accepted = None;
                for _ in 0..=max_halvings {
                    let cand = step(&u, &eval.gradient, eta, problem);
                    let mut delta = cand.clone();
                    delta.axpy(-1.0, &u);
                    let decrease = pairing(&eval.gradient, &delta, tree);
                    let e = evaluate_gradient(problem, &cand, tree, &settings.picard).map_err(wrap(iteration + 1))?;
                    if e.cost <= eval.cost + armijo * decrease {
                        eta_prev = eta;
                        accepted = Some((cand, e));
                        break;
                    }
                    eta *= 0.5;
                }
                accepted
            }
        };
        match next {
            Some((cand, e)) => {
                u = cand;
                eval = e;
                costs.push(eval.cost);
            }
            None => {
                let vi = check_variational_inequality(&eval.gradient, &u, &problem.control_box, settings.vi_tol)
                    .map_err(wrap(iteration))?;
                return Ok(OptimizeOutcome {
                    control: u,
                    costs,
                    vi,
                    iterations: iteration,
                    converged: false,
                });
            }
        }
    }
    unreachable!("the loop returns at max_iter")
}
