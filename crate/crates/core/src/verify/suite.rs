//! The acceptance checks as deterministic report sections.

use crate::adjoint::{
    assemble_adjoint, bismut_residual, equivalence_check, linearize, projected_gradient_descent, solve_bismut_adjoint,
    OptimizerSettings, StepRule,
};
use crate::backward::{
    bsde_estimate, bsvie_estimate, m_condition_error, norm_equivalence, picard_residual, random_bsvie_data,
    solve_vnbsfe, MSolution, PicardSettings,
};
use crate::error::Result;
use crate::forward::{constant_control, eval_cost, solve_nsfde};
use crate::grid::TimeGrid;
use crate::presets::{build_preset, PresetName, PresetOptions};
use crate::tree::ScenarioTree;

use super::duality::{duality_for_problem, random_control};
use super::expansion::{expansion_check, gradient_check, GradientRule, RatioRule};
use super::oracle::{bsde_reduction_gap, smooth_payoff, Riccati};
use super::report::{echo, CheckReport, ConfigEcho};

/// Weight used for every norm-equivalence check.
pub const NORM_BETA: f64 = 3.0;
/// Rounding allowance on estimate ratios; the last Volterra row is an equality.
pub const ESTIMATE_SLACK: f64 = 1e-12;
/// Picard tolerance for checks whose own tolerance is near `1e-10`.
pub const TIGHT_PICARD_TOL: f64 = 1e-13;

/// Reports of one group of checks, free-form notes that never fail, and
/// the norm-equivalence slacks of every adjoint solution produced.
#[derive(Debug, Clone, Default)]
pub struct Section {
    pub reports: Vec<CheckReport>,
    pub notes: Vec<String>,
    pub slacks: Vec<(ConfigEcho, f64)>,
}

impl Section {
    fn record(&mut self, sol: &MSolution, tree: &ScenarioTree, config: &ConfigEcho) {
        let ne = norm_equivalence(sol, tree, NORM_BETA);
        self.slacks.push((config.clone(), ne.lower_slack.min(ne.upper_slack)));
    }

    fn extend(&mut self, other: Section) {
        self.reports.extend(other.reports);
        self.notes.extend(other.notes);
        self.slacks.extend(other.slacks);
    }

    /// One report per recorded solution.
    pub fn norm_reports(&self) -> Vec<CheckReport> {
        self.slacks
            .iter()
            .map(|(c, s)| CheckReport::at_least("norm-equivalence-slack", *s, -1e-12, c))
            .collect()
    }
}

fn tree_for(grid: TimeGrid) -> Result<ScenarioTree> {
    ScenarioTree::with_default_budget(grid, 1)
}

fn tight() -> PicardSettings {
    PicardSettings {
        tol: TIGHT_PICARD_TOL,
        max_iter: 400,
        ..PicardSettings::default()
    }
}

fn with_key(mut c: ConfigEcho, k: &str, v: impl ToString) -> ConfigEcho {
    c.insert(k.into(), v.to_string());
    c
}

/// Duality identity on `random-linear` for each seed (`N = 8`, `L = 2`),
/// with the M-solution conditions of every adjoint solve.
pub fn duality_identity(seeds: impl IntoIterator<Item = u64>) -> Result<Section> {
    let grid = TimeGrid::new(1.0, 8, 2)?;
    let tree = tree_for(grid)?;
    let mut out = Section::default();
    for seed in seeds {
        let opts = PresetOptions { seed, ..PresetOptions::default() };
        let p = build_preset(PresetName::RandomLinear, grid, &opts)?;
        let cfg = echo("random-linear", &grid, Some(seed));
        let ubar = random_control(&tree, 2, seed.wrapping_add(1000), 1.0);
        let v = random_control(&tree, 2, seed.wrapping_add(2000), 1.0);
        let d = duality_for_problem(&p, &ubar, &v, &tree, &tight(), 1e-9, &cfg)?;
        out.reports.extend(d.reports);
        let (recon, zero) = m_condition_error(&tree, &d.adjoint)?;
        out.reports.push(CheckReport::at_most("m-condition-reconstruction", recon, 1e-12, &cfg));
        out.reports.push(CheckReport::at_most("m-condition-zero-region", zero, 0.0, &cfg));
        out.notes.push(format!("random-linear seed {seed}: {} picard sweeps", d.picard.iterations()));
        out.record(&d.adjoint, &tree, &cfg);
    }
    Ok(out)
}

/// Undelayed duality of `lq`, where the classical adjoint gives a third value.
pub fn duality_undelayed() -> Result<Section> {
    let grid = TimeGrid::new(1.0, 8, 0)?;
    let tree = tree_for(grid)?;
    let mut out = Section::default();
    for name in [PresetName::Lq, PresetName::DelayLinear, PresetName::RandomLinear] {
        let p = build_preset(name, grid, &PresetOptions::default())?;
        let cfg = echo(name.as_str(), &grid, Some(1));
        let m = p.control_dim();
        let d = duality_for_problem(&p, &random_control(&tree, m, 11, 1.0), &random_control(&tree, m, 12, 1.0), &tree, &tight(), 1e-9, &cfg)?;
        out.reports.extend(d.reports);
        out.record(&d.adjoint, &tree, &cfg);
    }
    Ok(out)
}

/// Volterra solve of a linear BSDE against backward induction (`N = 10`).
pub fn bsde_reduction() -> Result<Section> {
    let grid = TimeGrid::new(1.0, 10, 0)?;
    let tree = tree_for(grid)?;
    let mut out = Section::default();
    let payoff = smooth_payoff(&tree);
    for rate in [0.0, 0.7, -0.4] {
        let cfg = with_key(echo("bsde-linear", &grid, None), "rate", rate);
        let (sol, gap) = bsde_reduction_gap(&tree, &payoff, rate, &tight())?;
        out.reports.push(CheckReport::at_most("bsde-oracle-sup-gap", gap, 1e-10, &cfg));
        out.record(&sol, &tree, &cfg);
    }
    Ok(out)
}

/// Classical against Volterra adjoint on undelayed linear presets (`N = 8`).
pub fn equivalence() -> Result<Section> {
    let grid = TimeGrid::new(1.0, 8, 0)?;
    let tree = tree_for(grid)?;
    let mut out = Section::default();
    let cases = [
        (PresetName::Lq, 1),
        (PresetName::DelayLinear, 1),
        (PresetName::RandomLinear, 1),
        (PresetName::RandomLinear, 2),
        (PresetName::RandomLinear, 3),
    ];
    for (name, seed) in cases {
        let opts = PresetOptions { seed, ..PresetOptions::default() };
        let p = build_preset(name, grid, &opts)?;
        let cfg = echo(name.as_str(), &grid, Some(seed));
        let ubar = random_control(&tree, p.control_dim(), seed + 40, 1.0);
        let x = solve_nsfde(&p, &ubar, &tree)?.x;
        let lin = linearize(&p, &x, &ubar, &tree)?;
        let (gen, term) = assemble_adjoint(&lin, &tree)?;
        let sol = solve_vnbsfe(&gen, &term, &tree, &tight())?.solution;
        let ba = solve_bismut_adjoint(&lin, &tree)?;
        let eq = equivalence_check(&sol, &ba, &tree)?;
        out.reports.push(CheckReport::at_most("equivalence-p-next", eq.p_next, 1e-9, &cfg));
        out.reports.push(CheckReport::at_most("equivalence-p-now", eq.p_now, 1e-9, &cfg));
        out.reports.push(CheckReport::at_most("equivalence-q", eq.q, 1e-9, &cfg));
        out.reports.push(CheckReport::at_most("classical-adjoint-residual", bismut_residual(&lin, &ba, &tree)?, 1e-10, &cfg));
        out.record(&sol, &tree, &cfg);
    }
    Ok(out)
}

/// Maximum-principle gradient against central differences of `J`.
pub fn gradient_consistency() -> Result<Section> {
    let mut out = Section::default();
    let exact = [
        (PresetName::Lq, TimeGrid::new(1.0, 8, 0)?, 0.5),
        (PresetName::NeutralLinear, TimeGrid::new(1.0, 8, 2)?, 0.5),
        (PresetName::NeutralLinear, TimeGrid::new(1.0, 8, 2)?, 0.9),
    ];
    for (name, grid, kappa) in exact {
        let tree = tree_for(grid)?;
        let p = build_preset(name, grid, &PresetOptions { kappa, seed: 1 })?;
        let cfg = with_key(echo(name.as_str(), &grid, Some(1)), "kappa", kappa);
        let ubar = random_control(&tree, 1, 21, 1.0);
        let v = random_control(&tree, 1, 22, 1.0);
        let g = gradient_check(&p, &ubar, &v, &[0.1], &tree, &tight(), GradientRule::Exact { tol: 1e-10 }, &cfg)?;
        out.reports.extend(g.reports);
        out.record(&g.adjoint, &tree, &cfg);
    }
    let grid = TimeGrid::new(1.0, 8, 2)?;
    let tree = tree_for(grid)?;
    let p = build_preset(PresetName::NeutralTanh, grid, &PresetOptions::default())?;
    let cfg = echo("neutral-tanh", &grid, Some(1));
    let ubar = random_control(&tree, 1, 23, 1.0);
    let v = random_control(&tree, 1, 24, 1.0);
    let g = gradient_check(
        &p,
        &ubar,
        &v,
        &[0.1, 0.05, 0.025],
        &tree,
        &tight(),
        GradientRule::ErrorRatios(RatioRule::Band { lo: 0.15, hi: 0.4 }),
        &cfg,
    )?;
    let errors: Vec<String> = g.central.iter().map(|c| format!("{:.3e}", (c - g.pairing).abs())).collect();
    out.notes.push(format!("neutral-tanh central-difference errors: {}", errors.join(", ")));
    out.reports.extend(g.reports);
    out.record(&g.adjoint, &tree, &cfg);
    Ok(out)
}

/// Projected gradient on `lq` (`N = 10`, box `[−10, 10]`) against Riccati.
pub fn optimizer() -> Result<Section> {
    let grid = TimeGrid::new(1.0, 10, 0)?;
    let tree = tree_for(grid)?;
    let p = build_preset(PresetName::Lq, grid, &PresetOptions::default())?;
    let cfg = echo("lq", &grid, None);
    let mut out = Section::default();
    let riccati = Riccati::solve(grid.steps(), grid.dt());
    let target = riccati.value(1.0);
    let u_star = riccati.optimal_control(&tree, 1.0)?;
    let x_star = solve_nsfde(&p, &u_star, &tree)?.x;
    out.reports.push(CheckReport::compare(
        "riccati-feedback-cost",
        eval_cost(&p, &x_star, &u_star, &tree)?,
        target,
        1e-12,
        &cfg,
    ));
    let settings = OptimizerSettings {
        max_iter: 500,
        step: StepRule::default(),
        vi_tol: 1e-6,
        picard: PicardSettings::default(),
    };
    let res = projected_gradient_descent(&p, &constant_control(&tree, &[0.0]), &tree, &settings)?;
    let cost = *res.costs.last().expect("at least the initial cost");
    out.reports.push(CheckReport::compare_abs("optimizer-cost-vs-riccati", cost, target, 1e-6, &cfg));
    out.reports.push(CheckReport::at_most("optimizer-iterations", res.iterations as f64, 500.0, &cfg));
    out.reports.push(CheckReport::at_most("optimizer-vi-violation", res.vi.worst_violation, 1e-6, &cfg));
    out.reports.push(CheckReport::flag("optimizer-converged", res.converged && res.vi.pass, &cfg));
    out.notes.push(format!("lq optimizer: {} iterations, J = {cost:.12}, Riccati J* = {target:.12}", res.iterations));
    Ok(out)
}

/// Picard contraction of the pure neutral adjoint of `neutral-linear`.
pub fn picard_contraction() -> Result<Section> {
    let grid = TimeGrid::new(1.0, 8, 2)?;
    let tree = tree_for(grid)?;
    let mut out = Section::default();
    for (kappa, limit) in [(0.5, 60.0), (0.9, 250.0)] {
        let p = build_preset(PresetName::NeutralLinear, grid, &PresetOptions { kappa, seed: 1 })?;
        let cfg = with_key(echo("neutral-linear", &grid, None), "kappa", kappa);
        let ubar = random_control(&tree, 1, 31, 1.0);
        let x = solve_nsfde(&p, &ubar, &tree)?.x;
        let lin = linearize(&p, &x, &ubar, &tree)?;
        let (gen, term) = assemble_adjoint(&lin, &tree)?;
        let settings = PicardSettings {
            tol: 1e-10,
            max_iter: 250,
            ..PicardSettings::default()
        };
        let res = solve_vnbsfe(&gen, &term, &tree, &settings)?;
        let (_, ratios) = picard_residual(&res.log);
        let worst = ratios.iter().copied().fold(0.0, f64::max);
        out.reports.push(CheckReport::at_most("picard-update-ratio", worst, kappa + 1e-9, &cfg));
        out.reports.push(CheckReport::at_most("picard-iterations", res.log.iterations() as f64, limit, &cfg));
        out.notes.push(format!(
            "neutral-linear kappa {kappa}: {} sweeps, largest update ratio {worst:.6}",
            res.log.iterations()
        ));
        out.record(&res.solution, &tree, &cfg);
    }
    Ok(out)
}

/// Estimate inequalities with `(α, β) = (1, 3)` on 100 random instances each.
pub fn estimates() -> Result<Section> {
    estimate_instances(TimeGrid::new(1.0, 6, 0)?, TimeGrid::new(1.0, 6, 2)?, 100, 1.0, 3.0)
}

/// Random-data estimate checks: the conditional BSDE estimate on
/// `bsde_grid` (delay ignored), the weighted Volterra estimate on
/// `volterra_grid`; violations of the unweighted form are only counted.
pub fn estimate_instances(
    bsde_grid: TimeGrid,
    volterra_grid: TimeGrid,
    instances: u64,
    alpha: f64,
    beta: f64,
) -> Result<Section> {
    let mut out = Section::default();
    let grid = TimeGrid::new(bsde_grid.horizon(), bsde_grid.steps(), 0)?;
    let tree = tree_for(grid)?;
    let cfg = with_key(echo("random-bsde", &grid, None), "instances", instances);
    let mut worst = 0.0_f64;
    for seed in 0..instances {
        let (phi, h) = random_bsvie_data(&tree, 1, seed);
        let r = bsde_estimate(&tree, 0, &phi[0], &h[0], 1, alpha, beta)?;
        worst = worst.max(r.ratio());
    }
    out.reports.push(CheckReport::at_most("estimate-bsde-worst-ratio", worst, 1.0 + ESTIMATE_SLACK, &cfg));

    let tree = tree_for(volterra_grid)?;
    let cfg = with_key(echo("random-bsvie", &volterra_grid, None), "instances", instances);
    let mut worst = 0.0_f64;
    let mut unweighted_violations = 0;
    for seed in 0..instances {
        let (phi, h) = random_bsvie_data(&tree, 1, 1000 + seed);
        let mut violated = false;
        for i in 0..=tree.steps() {
            let (weighted, unweighted) = bsvie_estimate(&tree, i, &phi[i], &h[i], 1, alpha, beta)?;
            worst = worst.max(weighted.ratio());
            violated |= !unweighted.satisfied;
        }
        unweighted_violations += violated as usize;
    }
    out.reports.push(CheckReport::at_most(
        "estimate-volterra-weighted-worst-ratio",
        worst,
        1.0 + ESTIMATE_SLACK,
        &cfg,
    ));
    out.notes.push(format!(
        "unweighted Volterra estimate violated on {unweighted_violations} of {instances} instances"
    ));
    Ok(out)
}

/// Ratios of first-order cost remainders under halving `ε`.
pub fn expansion() -> Result<Section> {
    let grid = TimeGrid::new(1.0, 8, 2)?;
    let tree = tree_for(grid)?;
    let eps = [0.1, 0.05, 0.025];
    let mut out = Section::default();
    let cases = [
        (PresetName::Lq, RatioRule::Quadratic { tol: 1e-6 }),
        (PresetName::DelayLinear, RatioRule::Quadratic { tol: 1e-6 }),
        (PresetName::NeutralLinear, RatioRule::Quadratic { tol: 1e-6 }),
        (PresetName::RandomLinear, RatioRule::Quadratic { tol: 1e-6 }),
        (PresetName::NeutralTanh, RatioRule::Band { lo: 0.15, hi: 0.4 }),
        (PresetName::SinDrift, RatioRule::Band { lo: 0.15, hi: 0.4 }),
    ];
    for (name, rule) in cases {
        let p = build_preset(name, grid, &PresetOptions::default())?;
        let cfg = echo(name.as_str(), &grid, Some(1));
        let m = p.control_dim();
        let res = expansion_check(
            &p,
            &random_control(&tree, m, 51, 1.0),
            &random_control(&tree, m, 52, 1.0),
            &eps,
            &tree,
            rule,
            &cfg,
        )?;
        let r: Vec<String> = res.cost_ratios.iter().map(|x| format!("{x:.6}")).collect();
        out.notes.push(format!("{name} remainder ratios: {}", r.join(", ")));
        out.reports.extend(res.reports);
    }
    Ok(out)
}

/// Every section in a fixed order, followed by the norm-equivalence slacks.
pub fn selftest() -> Result<Section> {
    let mut all = Section::default();
    all.extend(duality_identity(1..=20)?);
    all.extend(duality_undelayed()?);
    all.extend(bsde_reduction()?);
    all.extend(equivalence()?);
    all.extend(gradient_consistency()?);
    all.extend(optimizer()?);
    all.extend(picard_contraction()?);
    all.extend(estimates()?);
    all.extend(expansion()?);
    let norms = all.norm_reports();
    all.reports.extend(norms);
    Ok(all)
}
