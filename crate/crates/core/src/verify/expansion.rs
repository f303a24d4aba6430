use crate::adjoint::{evaluate_gradient, gradient_pairing};
use crate::backward::{MSolution, PicardSettings};
use crate::error::{Error, Result};
use crate::forward::{eval_cost, first_order_check, shifted_control, solve_nsfde, ControlProcess, ExpansionTable, NsfdeProblem};
use crate::tree::ScenarioTree;

use super::report::{CheckReport, ConfigEcho};

/// What the ratios of consecutive remainders must satisfy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RatioRule {
    /// `|ratio − (ε_{k+1}/ε_k)²| ≤ tol`: exactly quadratic remainders.
    Quadratic { tol: f64 },
    /// `lo ≤ ratio ≤ hi`.
    Band { lo: f64, hi: f64 },
}

impl RatioRule {
    fn report(self, check: String, ratio: f64, eps: (f64, f64), config: &ConfigEcho) -> CheckReport {
        match self {
            RatioRule::Quadratic { tol } => CheckReport::compare_abs(check, ratio, (eps.1 / eps.0).powi(2), tol, config),
            RatioRule::Band { lo, hi } => CheckReport::within(check, ratio, lo, hi, config),
        }
    }
}

fn ratios(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| w[1] / w[0]).collect()
}

#[derive(Debug, Clone)]
pub struct ExpansionOutcome {
    pub table: ExpansionTable,
    pub cost_ratios: Vec<f64>,
    pub reports: Vec<CheckReport>,
}

/// Cost remainders `|J(ū+εv) − J(ū) − ε·dJ(ū; v)|` under successive `ε`,
/// with one report per consecutive ratio.
pub fn expansion_check(
    problem: &NsfdeProblem,
    ubar: &ControlProcess,
    v: &ControlProcess,
    epsilons: &[f64],
    tree: &ScenarioTree,
    rule: RatioRule,
    config: &ConfigEcho,
) -> Result<ExpansionOutcome> {
    let table = first_order_check(problem, ubar, v, epsilons, tree)?;
    let remainders: Vec<f64> = table.rows.iter().map(|r| r.cost_remainder).collect();
    let cost_ratios = ratios(&remainders);
    let reports = cost_ratios
        .iter()
        .enumerate()
        .map(|(k, r)| {
            rule.report(
                format!("expansion-ratio-{}", k + 1),
                *r,
                (epsilons[k], epsilons[k + 1]),
                config,
            )
        })
        .collect();
    Ok(ExpansionOutcome {
        table,
        cost_ratios,
        reports,
    })
}

#[derive(Debug, Clone)]
pub struct GradientCheckOutcome {
    /// `E Σ ⟨h, v⟩dt`.
    pub pairing: f64,
    /// `(J(ū+εv) − J(ū−εv))/(2ε)` for each `ε`.
    pub central: Vec<f64>,
    pub reports: Vec<CheckReport>,
    pub adjoint: MSolution,
}

/// How central differences are compared with `⟨h, v⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientRule {
    /// Every `ε` agrees at relative `tol`; exact for state-affine problems
    /// with quadratic cost.
    Exact { tol: f64 },
    /// Ratios of consecutive errors under the given rule.
    ErrorRatios(RatioRule),
}

/// Central finite differences of `J` against the maximum-principle gradient.
#[allow(clippy::too_many_arguments)]
pub fn gradient_check(
    problem: &NsfdeProblem,
    ubar: &ControlProcess,
    v: &ControlProcess,
    epsilons: &[f64],
    tree: &ScenarioTree,
    picard: &PicardSettings,
    rule: GradientRule,
    config: &ConfigEcho,
) -> Result<GradientCheckOutcome> {
    if epsilons.is_empty() || epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::Precondition("finite-difference steps must be positive".into()));
    }
    let eval = evaluate_gradient(problem, ubar, tree, picard)?;
    let pairing = gradient_pairing(&eval.gradient, v, tree);
    let cost = |eps: f64| -> Result<f64> {
        let u = shifted_control(ubar, v, eps);
        let x = solve_nsfde(problem, &u, tree)?.x;
        eval_cost(problem, &x, &u, tree)
    };
    let mut central = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        central.push((cost(eps)? - cost(-eps)?) / (2.0 * eps));
    }
    let reports = match rule {
        GradientRule::Exact { tol } => central
            .iter()
            .map(|c| CheckReport::compare("gradient-central-difference", *c, pairing, tol, config))
            .collect(),
        GradientRule::ErrorRatios(rule) => {
            let errors: Vec<f64> = central.iter().map(|c| (c - pairing).abs()).collect();
            ratios(&errors)
                .into_iter()
                .enumerate()
                .map(|(k, r)| {
                    rule.report(
                        format!("gradient-error-ratio-{}", k + 1),
                        r,
                        (epsilons[k], epsilons[k + 1]),
                        config,
                    )
                })
                .collect()
        }
    };
    Ok(GradientCheckOutcome {
        pairing,
        central,
        reports,
        adjoint: eval.adjoint,
    })
}
