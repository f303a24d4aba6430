use clap::Subcommand;

use nsfde_core::adjoint::{
    assemble_adjoint, bismut_residual, equivalence_check, linearize, projected_gradient_descent, solve_bismut_adjoint,
    AdjointGenerator, Linearization, OptimizerSettings,
};
use nsfde_core::backward::{
    estimate_diagnostics, lipschitz_probe, m_condition_error, norm_equivalence, picard_residual, solve_vnbsfe,
    Generator, MSolution, PicardOutcome, TerminalData,
};
use nsfde_core::composition::Nonlinearity;
use nsfde_core::forward::{constant_control, eval_cost, neutral_part, solve_nsfde, ControlProcess};
use nsfde_core::verify::suite::{self, NORM_BETA};
use nsfde_core::verify::{
    all_pass, duality_for_problem, echo, gradient_check, random_control, CheckReport, ConfigEcho, GradientRule,
    RatioRule, Riccati,
};
use nsfde_core::presets::PresetName;

use crate::config::{Prepared, RunConfig};
use crate::error::{CliError, CliResult};
use crate::tables::{costs_csv, process_csv, z_slices_csv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Solve the state equation and dump X.
    Forward,
    /// Solve the adjoint equation and dump Y and slices of Z.
    Adjoint,
    /// Duality between the variational cost and the adjoint pairing.
    Duality,
    /// Gradient against finite differences, and the variational inequality at the optimizer output.
    MpCheck,
    /// Projected gradient descent.
    Optimize,
    /// Classical against Volterra adjoint; undelayed problems only.
    Equivalence,
    /// Estimate inequalities, Picard contraction and Lipschitz bounds.
    Diagnostics,
    /// The full acceptance suite on its built-in configurations.
    Selftest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Forward => "forward",
            Command::Adjoint => "adjoint",
            Command::Duality => "duality",
            Command::MpCheck => "mp-check",
            Command::Optimize => "optimize",
            Command::Equivalence => "equivalence",
            Command::Diagnostics => "diagnostics",
            Command::Selftest => "selftest",
        }
    }
}

/// What a subcommand produced: checks, CSV tables by file name, and notes
/// that never affect the exit code.
#[derive(Debug, Clone, Default)]
pub struct Output {
    pub reports: Vec<CheckReport>,
    pub tables: Vec<(String, String)>,
    pub notes: Vec<String>,
}

impl Output {
    pub fn passed(&self) -> bool {
        all_pass(&self.reports)
    }

    fn table(&mut self, name: &str, csv: String) {
        self.tables.push((name.to_string(), csv));
    }

    fn norms(&mut self, sol: &MSolution, p: &Prepared, cfg: &ConfigEcho) {
        let ne = norm_equivalence(sol, &p.tree, NORM_BETA);
        self.reports.push(CheckReport::at_least(
            "norm-equivalence-slack",
            ne.lower_slack.min(ne.upper_slack),
            -1e-12,
            cfg,
        ));
    }

    fn m_condition(&mut self, sol: &MSolution, p: &Prepared, cfg: &ConfigEcho) -> CliResult<()> {
        let (recon, zero) = m_condition_error(&p.tree, sol)?;
        self.reports.push(CheckReport::at_most("m-condition-reconstruction", recon, 1e-12, cfg));
        self.reports.push(CheckReport::at_most("m-condition-zero-region", zero, 0.0, cfg));
        Ok(())
    }
}

fn config_echo(p: &Prepared) -> ConfigEcho {
    let mut c = echo(&p.label, &p.grid, Some(p.config.seed));
    if let Some(k) = p.config.problem.kappa {
        c.insert("kappa".into(), k.to_string());
    }
    c
}

/// The configured constant control (zero by default).
fn base_control(p: &Prepared) -> ControlProcess {
    let m = p.problem.control_dim();
    let u0 = p.config.optimizer.u0.clone().unwrap_or_else(|| vec![0.0; m]);
    constant_control(&p.tree, &u0)
}

/// Random reference control and direction, drawn from the run seed.
fn random_pair(p: &Prepared) -> (ControlProcess, ControlProcess) {
    let m = p.problem.control_dim();
    let s = p.config.seed;
    (
        random_control(&p.tree, m, s.wrapping_add(1000), 1.0),
        random_control(&p.tree, m, s.wrapping_add(2000), 1.0),
    )
}

fn state_affine(p: &Prepared) -> bool {
    match (p.preset, &p.config.problem.inline) {
        (Some(name), _) => name.is_state_affine(),
        (None, Some(spec)) => spec
            .neutral
            .iter()
            .chain(std::iter::once(&spec.drift))
            .chain(&spec.diffusion)
            .all(|m| m.phi == Nonlinearity::Identity),
        (None, None) => false,
    }
}

struct Adjoint {
    lin: Linearization,
    term: TerminalData,
}

impl Adjoint {
    fn at(p: &Prepared, u: &ControlProcess) -> CliResult<Self> {
        let x = solve_nsfde(&p.problem, u, &p.tree)?.x;
        let lin = linearize(&p.problem, &x, u, &p.tree)?;
        let (_, term) = assemble_adjoint(&lin, &p.tree)?;
        Ok(Self { lin, term })
    }

    fn generator(&self) -> AdjointGenerator<'_> {
        AdjointGenerator::new(&self.lin)
    }

    fn solve(&self, p: &Prepared) -> CliResult<PicardOutcome> {
        Ok(solve_vnbsfe(&self.generator(), &self.term, &p.tree, &p.config.picard())?)
    }
}

fn picard_log_csv(out: &PicardOutcome) -> String {
    let mut s = String::from("iteration,update_norm,sup_update\n");
    for st in &out.log.steps {
        s.push_str(&format!("{},{:.16e},{:.16e}\n", st.iteration, st.update_norm, st.sup_update));
    }
    s
}

fn forward(p: &Prepared) -> CliResult<Output> {
    let mut out = Output::default();
    let cfg = config_echo(p);
    let u = base_control(p);
    let sol = solve_nsfde(&p.problem, &u, &p.tree)?;
    let d = neutral_part(&p.problem, &sol.x, &p.tree);
    let mut residual = 0.0_f64;
    for level in 0..=p.tree.steps() as isize {
        for (a, b) in d.level(level).iter().zip(sol.d.level(level)) {
            residual = residual.max((a - b).abs());
        }
    }
    out.reports.push(CheckReport::at_most("forward-neutral-residual", residual, p.problem.neutral.tol, &cfg));
    let cost = eval_cost(&p.problem, &sol.x, &u, &p.tree)?;
    out.notes.push(format!("{}: J = {cost:.12}", p.label));
    out.table("forward-x.csv", process_csv(&sol.x));
    out.table("forward-control.csv", process_csv(&u));
    Ok(out)
}

fn adjoint(p: &Prepared) -> CliResult<Output> {
    let mut out = Output::default();
    let cfg = config_echo(p);
    let adj = Adjoint::at(p, &base_control(p))?;
    let res = adj.solve(p)?;
    out.m_condition(&res.solution, p, &cfg)?;
    out.norms(&res.solution, p, &cfg);
    out.notes.push(format!("{}: {} picard sweeps", p.label, res.log.iterations()));
    out.table("adjoint-y.csv", process_csv(&res.solution.y));
    out.table("adjoint-z.csv", z_slices_csv(&res.solution.z, &p.config.checks.slices));
    out.table("adjoint-picard.csv", picard_log_csv(&res));
    Ok(out)
}

fn duality(p: &Prepared) -> CliResult<Output> {
    let mut out = Output::default();
    let cfg = config_echo(p);
    let (ubar, v) = random_pair(p);
    let d = duality_for_problem(&p.problem, &ubar, &v, &p.tree, &p.config.picard(), p.config.checks.tol, &cfg)?;
    out.reports.extend(d.reports);
    out.m_condition(&d.adjoint, p, &cfg)?;
    out.norms(&d.adjoint, p, &cfg);
    out.notes.push(format!("{}: {} picard sweeps", p.label, d.picard.iterations()));
    Ok(out)
}

fn optimizer_settings(p: &Prepared) -> OptimizerSettings {
    let o = &p.config.optimizer;
    OptimizerSettings {
        max_iter: o.steps,
        step: o.step_rule,
        vi_tol: o.vi_tol,
        picard: p.config.picard(),
    }
}

fn mp_check(p: &Prepared) -> CliResult<Output> {
    let mut out = Output::default();
    let cfg = config_echo(p);
    let c = &p.config.checks;
    let (ubar, v) = random_pair(p);
    let (eps, rule) = if state_affine(p) {
        (vec![c.epsilons[0]], GradientRule::Exact { tol: c.gradient_tol })
    } else {
        let band = RatioRule::Band {
            lo: c.ratio_band[0],
            hi: c.ratio_band[1],
        };
        (c.epsilons.clone(), GradientRule::ErrorRatios(band))
    };
    let g = gradient_check(&p.problem, &ubar, &v, &eps, &p.tree, &p.config.picard(), rule, &cfg)?;
    out.reports.extend(g.reports);
    out.norms(&g.adjoint, p, &cfg);
    let res = projected_gradient_descent(&p.problem, &base_control(p), &p.tree, &optimizer_settings(p))?;
    out.reports.push(CheckReport::at_most("mp-vi-violation", res.vi.worst_violation, p.config.optimizer.vi_tol, &cfg));
    out.notes.push(format!(
        "{}: gradient pairing {:.12e}; optimizer stopped after {} iterations",
        p.label, g.pairing, res.iterations
    ));
    Ok(out)
}

fn optimize(p: &Prepared) -> CliResult<Output> {
    let mut out = Output::default();
    let cfg = config_echo(p);
    let settings = optimizer_settings(p);
    let res = projected_gradient_descent(&p.problem, &base_control(p), &p.tree, &settings)?;
    let cost = *res.costs.last().expect("the initial cost is always recorded");
    out.reports.push(CheckReport::flag("optimizer-converged", res.converged, &cfg));
    out.reports.push(CheckReport::at_most("optimizer-iterations", res.iterations as f64, settings.max_iter as f64, &cfg));
    out.reports.push(CheckReport::at_most("optimizer-vi-violation", res.vi.worst_violation, settings.vi_tol, &cfg));
    let riccati_applies = p.preset == Some(PresetName::Lq) && p.config.control_box.is_none() && p.config.problem.initial.is_none();
    if riccati_applies {
        let r = Riccati::solve(p.grid.steps(), p.grid.dt());
        out.reports.push(CheckReport::compare_abs("optimizer-cost-vs-riccati", cost, r.value(1.0), 1e-6, &cfg));
    }
    out.notes.push(format!("{}: {} iterations, J = {cost:.12}", p.label, res.iterations));
    out.table("optimize-control.csv", process_csv(&res.control));
    out.table("optimize-costs.csv", costs_csv(&res.costs));
    Ok(out)
}

fn equivalence(p: &Prepared) -> CliResult<Output> {
    if p.grid.delay_steps() > 0 {
        return Err(CliError::Config {
            message: format!(
                "grid.L = {}: the classical adjoint exists only for the undelayed reduction (δ = 0), set L = 0",
                p.grid.delay_steps()
            ),
            key: Some("grid.L".into()),
            line: None,
            column: None,
        });
    }
    let mut out = Output::default();
    let cfg = config_echo(p);
    let tol = p.config.checks.tol;
    let (ubar, _) = random_pair(p);
    let adj = Adjoint::at(p, &ubar)?;
    let sol = adj.solve(p)?.solution;
    let ba = solve_bismut_adjoint(&adj.lin, &p.tree)?;
    let eq = equivalence_check(&sol, &ba, &p.tree)?;
    out.reports.push(CheckReport::at_most("equivalence-p-next", eq.p_next, tol, &cfg));
    out.reports.push(CheckReport::at_most("equivalence-p-now", eq.p_now, tol, &cfg));
    out.reports.push(CheckReport::at_most("equivalence-q", eq.q, tol, &cfg));
    out.reports.push(CheckReport::at_most("classical-adjoint-residual", bismut_residual(&adj.lin, &ba, &p.tree)?, tol, &cfg));
    out.norms(&sol, p, &cfg);
    Ok(out)
}

fn diagnostics(p: &Prepared) -> CliResult<Output> {
    let mut out = Output::default();
    let cfg = config_echo(p);
    let c = &p.config.checks;
    let section = suite::estimate_instances(p.grid, p.grid, c.instances, c.alpha, c.beta)?;
    out.reports.extend(section.reports);
    out.notes.extend(section.notes);

    let (ubar, _) = random_pair(p);
    let adj = Adjoint::at(p, &ubar)?;
    let gen = adj.generator();
    let res = adj.solve(p)?;
    let est = estimate_diagnostics(&res.solution, &gen, &adj.term, &p.tree, c.alpha, c.beta)?;
    let limit = 1.0 + suite::ESTIMATE_SLACK;
    out.reports.push(CheckReport::at_most("estimate-adjoint-bsde-ratio", est.bsde.ratio(), limit, &cfg));
    out.reports.push(CheckReport::at_most(
        "estimate-adjoint-volterra-weighted-ratio",
        est.volterra_weighted.ratio(),
        limit,
        &cfg,
    ));
    out.notes.push(format!(
        "{}: unweighted Volterra estimate {} (lhs {:.6e}, rhs {:.6e}); solution/data ratio {:.6e}",
        p.label,
        if est.volterra_unweighted.satisfied { "holds" } else { "violated" },
        est.volterra_unweighted.lhs,
        est.volterra_unweighted.rhs,
        est.solution_ratio
    ));
    let probe = lipschitz_probe(&gen, &p.tree, 200, p.config.seed);
    out.reports.push(CheckReport::flag("generator-lipschitz-consistent", probe.consistent(1e-9), &cfg));
    let (_, ratios) = picard_residual(&res.log);
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    if !gen.has_driver() {
        out.reports.push(CheckReport::at_most("picard-update-ratio", worst, gen.kappa().sqrt() + 1e-9, &cfg));
    }
    out.notes.push(format!(
        "{}: {} picard sweeps, largest update ratio {worst:.6}",
        p.label,
        res.log.iterations()
    ));
    out.norms(&res.solution, p, &cfg);
    out.m_condition(&res.solution, p, &cfg)?;
    Ok(out)
}

fn selftest() -> CliResult<Output> {
    let s = suite::selftest()?;
    Ok(Output {
        reports: s.reports,
        tables: Vec::new(),
        notes: s.notes,
    })
}

/// Runs one subcommand; `selftest` ignores the configuration.
pub fn run_subcommand(cmd: Command, config: &RunConfig) -> CliResult<Output> {
    if cmd == Command::Selftest {
        return selftest();
    }
    let p = config.prepare()?;
    match cmd {
        Command::Forward => forward(&p),
        Command::Adjoint => adjoint(&p),
        Command::Duality => duality(&p),
        Command::MpCheck => mp_check(&p),
        Command::Optimize => optimize(&p),
        Command::Equivalence => equivalence(&p),
        Command::Diagnostics => diagnostics(&p),
        Command::Selftest => unreachable!("handled above"),
    }
}
