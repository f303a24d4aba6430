//! The run configuration: one JSON document, strictly validated.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use nsfde_core::adjoint::StepRule;
use nsfde_core::backward::{check_weights, PicardSettings};
use nsfde_core::composition::CompositionSpec;
use nsfde_core::forward::{ControlBox, NeutralSettings, NsfdeProblem};
use nsfde_core::grid::TimeGrid;
use nsfde_core::presets::{build_preset, composition_problem, PresetName, PresetOptions};
use nsfde_core::tree::{ScenarioTree, DEFAULT_BUDGET_BITS};
use nsfde_core::verify::ReportFormat;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "N")]
    pub steps: usize,
    #[serde(rename = "L", default)]
    pub delay_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeConfig {
    pub d: usize,
    pub budget_bits: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            d: 1,
            budget_bits: DEFAULT_BUDGET_BITS,
        }
    }
}

/// Either a named preset or an inline composition spec.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    pub preset: Option<PresetName>,
    /// Neutral strength of `neutral-linear`.
    pub kappa: Option<f64>,
    pub inline: Option<CompositionSpec>,
    /// Initial path on `−L..=0`, oldest first; a single entry is held constant.
    pub initial: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub neutral_tol: f64,
    pub neutral_max_iter: usize,
    pub picard_tol: f64,
    pub max_iter: usize,
    /// Weight of the Picard update norm.
    pub beta: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let n = NeutralSettings::default();
        let p = PicardSettings::default();
        Self {
            neutral_tol: n.tol,
            neutral_max_iter: n.max_iter,
            picard_tol: p.tol,
            max_iter: p.max_iter,
            beta: p.beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub steps: usize,
    pub step_rule: StepRule,
    /// Constant starting control; zero when absent.
    pub u0: Option<Vec<f64>>,
    pub vi_tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            step_rule: StepRule::default(),
            u0: None,
            vi_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksConfig {
    /// Relative tolerance of identity checks.
    pub tol: f64,
    /// Tolerance of the exact gradient check on state-affine problems.
    pub gradient_tol: f64,
    /// Finite-difference steps, halving.
    pub epsilons: Vec<f64>,
    /// Accepted band of remainder ratios for nonlinear problems.
    pub ratio_band: [f64; 2],
    /// Rows `i` of `Z(t_i, ·)` written by `adjoint`.
    pub slices: Vec<usize>,
    pub alpha: f64,
    pub beta: f64,
    pub instances: u64,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            gradient_tol: 1e-10,
            epsilons: vec![0.1, 0.05, 0.025],
            ratio_band: [0.15, 0.4],
            slices: vec![0],
            alpha: 1.0,
            beta: 3.0,
            instances: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub formats: Vec<ReportFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            formats: vec![ReportFormat::Json],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    #[serde(default)]
    pub tree: TreeConfig,
    #[serde(default)]
    pub problem: ProblemConfig,
    /// Replaces the preset's box.
    #[serde(default)]
    pub control_box: Option<ControlBox>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_seed() -> u64 {
    1
}

impl Default for RunConfig {
    /// `random-linear` on `T = 1`, `N = 8`, `L = 2`.
    fn default() -> Self {
        Self {
            grid: GridConfig {
                horizon: 1.0,
                steps: 8,
                delay_steps: 2,
            },
            tree: TreeConfig::default(),
            problem: ProblemConfig {
                preset: Some(PresetName::RandomLinear),
                ..ProblemConfig::default()
            },
            control_box: None,
            solver: SolverConfig::default(),
            optimizer: OptimizerConfig::default(),
            checks: ChecksConfig::default(),
            seed: default_seed(),
            output: OutputConfig::default(),
        }
    }
}

/// Line and column (1-based) of the last segment of `path`, each segment
/// searched as a quoted key after the previous one.
pub fn locate(text: &str, path: &str) -> Option<(usize, usize)> {
    let mut at = 0;
    for seg in path.split('.') {
        let needle = format!("\"{seg}\"");
        at += text[at..].find(&needle)?;
        at += 1;
    }
    let before = &text[..at - 1];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    Some((line, column))
}

fn invalid(text: Option<&str>, key: &str, message: impl Into<String>) -> CliError {
    // Tree limits are usually hit through `grid.N` when no `tree` entry exists.
    let fallback = if key.starts_with("tree") { Some("grid.N") } else { None };
    let pos = text.and_then(|t| locate(t, key).or_else(|| fallback.and_then(|f| locate(t, f))));
    CliError::Config {
        message: format!("{key}: {}", message.into()),
        key: Some(key.to_string()),
        line: pos.map(|p| p.0),
        column: pos.map(|p| p.1),
    }
}

/// Parses and validates; every error carries a line when one can be found.
pub fn parse_config(text: &str) -> CliResult<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config {
        message: serde_message(&e),
        key: None,
        line: Some(e.line()),
        column: Some(e.column()),
    })?;
    cfg.validate(Some(text))?;
    Ok(cfg)
}

/// The serde message without its trailing position, which is reported separately.
fn serde_message(e: &serde_json::Error) -> String {
    let full = e.to_string();
    let suffix = format!(" at line {} column {}", e.line(), e.column());
    full.strip_suffix(&suffix).unwrap_or(&full).to_string()
}

/// Validated configuration with everything a subcommand needs.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: RunConfig,
    pub grid: TimeGrid,
    pub tree: ScenarioTree,
    pub problem: NsfdeProblem,
    /// Preset name, or `inline`.
    pub label: String,
    pub preset: Option<PresetName>,
}

impl RunConfig {
    pub fn grid(&self) -> nsfde_core::Result<TimeGrid> {
        TimeGrid::new(self.grid.horizon, self.grid.steps, self.grid.delay_steps)
    }

    pub fn picard(&self) -> PicardSettings {
        PicardSettings {
            tol: self.solver.picard_tol,
            max_iter: self.solver.max_iter,
            beta: self.solver.beta,
            ..PicardSettings::default()
        }
    }

    /// Checks every precondition a later solve would trip over.
    pub fn validate(&self, text: Option<&str>) -> CliResult<()> {
        self.prepare_with(text).map(|_| ())
    }

    pub fn prepare(&self) -> CliResult<Prepared> {
        self.prepare_with(None)
    }

    fn prepare_with(&self, text: Option<&str>) -> CliResult<Prepared> {
        let grid = self.grid().map_err(|e| invalid(text, "grid", e.to_string()))?;
        let tree = ScenarioTree::new(grid, self.tree.d, self.tree.budget_bits)
            .map_err(|e| invalid(text, "tree", e.to_string()))?;
        let s = &self.solver;
        if !(s.neutral_tol > 0.0 && s.picard_tol > 0.0) {
            return Err(invalid(text, "solver", "tolerances must be positive"));
        }
        if s.beta <= 0.0 {
            return Err(invalid(text, "solver.beta", "the norm weight must be positive"));
        }
        let c = &self.checks;
        check_weights(c.alpha, c.beta).map_err(|e| invalid(text, "checks.beta", e.to_string()))?;
        if c.epsilons.is_empty() || c.epsilons.iter().any(|e| e.is_nan() || *e <= 0.0) {
            return Err(invalid(text, "checks.epsilons", "need at least one positive step"));
        }
        if c.ratio_band.iter().any(|x| x.is_nan()) || c.ratio_band[0] > c.ratio_band[1] {
            return Err(invalid(text, "checks.ratio_band", "lower end exceeds upper end"));
        }
        if let Some(i) = c.slices.iter().find(|i| **i > grid.steps() + grid.delay_steps()) {
            return Err(invalid(text, "checks.slices", format!("row {i} is beyond N + L")));
        }

        let p = &self.problem;
        let (mut problem, label, preset) = match (&p.preset, &p.inline) {
            (Some(name), None) => {
                let kappa = p.kappa.unwrap_or(PresetOptions::default().kappa);
                if !(0.0..1.0).contains(&kappa) {
                    return Err(invalid(
                        text,
                        "problem.kappa",
                        format!("κ = {kappa}: the neutral term must be a contraction, 0 ≤ κ < 1"),
                    ));
                }
                let opts = PresetOptions { kappa, seed: self.seed };
                let mut prob = build_preset(*name, grid, &opts).map_err(|e| invalid(text, "problem", e.to_string()))?;
                if let Some(init) = &p.initial {
                    prob.initial = expand_initial(init, grid).map_err(|m| invalid(text, "problem.initial", m))?;
                }
                (prob, name.as_str().to_string(), Some(*name))
            }
            (None, Some(spec)) => {
                if p.kappa.is_some() {
                    return Err(invalid(text, "problem.kappa", "only presets take κ; inline specs carry their own"));
                }
                let init = match &p.initial {
                    Some(v) => expand_initial(v, grid).map_err(|m| invalid(text, "problem.initial", m))?,
                    None => vec![vec![0.0; spec.state_dim]; grid.delay_steps() + 1],
                };
                let bx = self.control_box.clone().unwrap_or_else(|| ControlBox::symmetric(spec.control_dim, 10.0));
                let prob = composition_problem(spec.clone(), grid, init, bx).map_err(|e| {
                    let key = if matches!(e, nsfde_core::Error::NotContractive(_)) { "problem.inline.neutral" } else { "problem.inline" };
                    invalid(text, key, contraction_hint(e))
                })?;
                (prob, "inline".to_string(), None)
            }
            _ => return Err(invalid(text, "problem", "set exactly one of `preset` and `inline`")),
        };
        if let Some(bx) = &self.control_box {
            problem.control_box = bx.clone();
        }
        problem.neutral = NeutralSettings {
            tol: s.neutral_tol,
            max_iter: s.neutral_max_iter,
        };
        problem.validate().map_err(|e| invalid(text, "problem", e.to_string()))?;
        problem.check_tree(&tree).map_err(|e| invalid(text, "tree.d", e.to_string()))?;
        if let Some(u0) = &self.optimizer.u0 {
            if u0.len() != problem.control_dim() {
                return Err(invalid(text, "optimizer.u0", format!("expected {} components", problem.control_dim())));
            }
        }
        Ok(Prepared {
            config: self.clone(),
            grid,
            tree,
            problem,
            label,
            preset,
        })
    }
}

fn contraction_hint(e: nsfde_core::Error) -> String {
    match e {
        nsfde_core::Error::NotContractive(k) => {
            format!("neutral Lipschitz bound κ = {k}: the neutral term must be a contraction, κ < 1")
        }
        other => other.to_string(),
    }
}

fn expand_initial(init: &[Vec<f64>], grid: TimeGrid) -> Result<Vec<Vec<f64>>, String> {
    let want = grid.delay_steps() + 1;
    match init.len() {
        1 => Ok(vec![init[0].clone(); want]),
        n if n == want => Ok(init.to_vec()),
        n => Err(format!("got {n} points, need 1 or L + 1 = {want}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn locate_finds_nested_keys() {
        let text = "{\n  \"grid\": {\"T\": 1, \"N\": 4},\n  \"problem\": {\n    \"kappa\": 2\n  }\n}";
        assert_eq!(locate(text, "problem.kappa"), Some((4, 5)));
        assert_eq!(locate(text, "grid.N"), Some((2, 20)));
        assert_eq!(locate(text, "nope"), None);
    }

    #[test]
    fn initial_paths_expand() {
        let g = TimeGrid::new(1.0, 4, 2).unwrap();
        assert_eq!(expand_initial(&[vec![2.0]], g).unwrap().len(), 3);
        assert!(expand_initial(&[vec![1.0], vec![2.0]], g).is_err());
    }
}
