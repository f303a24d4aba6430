use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DiscreteLagMeasure, GridPoint, PathSegment, TimeGrid};
use crate::process::AdaptedProcess;
use crate::tree::ScenarioTree;

/// Path functionals of a controlled neutral equation
/// `d[X − g(t,X^t)] = b(t,X^t,u)dt + σ(t,X^t,u)dW` with running cost `l`.
///
/// All outputs are written into caller-provided buffers, which the
/// implementation overwrites. `σ` is laid out `n×d` row-major.
pub trait Coefficients: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    /// Contraction bound of `g` in its path argument.
    fn kappa(&self) -> f64;
    fn g(&self, t: GridPoint, x: &PathSegment, out: &mut [f64]);
    fn b(&self, t: GridPoint, x: &PathSegment, u: &[f64], out: &mut [f64]);
    fn sigma(&self, t: GridPoint, x: &PathSegment, u: &[f64], out: &mut [f64]);
    fn running_cost(&self, t: GridPoint, x: &PathSegment, u: &[f64]) -> f64;

    fn derivatives(&self) -> Option<&dyn CoefficientDerivatives> {
        None
    }
}

/// Lag measures of the kernel representation of the state derivatives of
/// `g`, `b`, `σ` and `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagMeasures {
    pub g: DiscreteLagMeasure,
    pub b: DiscreteLagMeasure,
    pub sigma: DiscreteLagMeasure,
    pub cost: DiscreteLagMeasure,
}

impl LagMeasures {
    pub fn all_dirac_zero() -> Self {
        let d = DiscreteLagMeasure::dirac(0);
        Self {
            g: d.clone(),
            b: d.clone(),
            sigma: d.clone(),
            cost: d,
        }
    }

    pub fn check_support(&self, delay_steps: usize) -> Result<()> {
        self.g.check_support(delay_steps)?;
        self.b.check_support(delay_steps)?;
        self.sigma.check_support(delay_steps)?;
        self.cost.check_support(delay_steps)
    }
}

/// Analytic derivative kernels: `g_x(t)φ = Σ_k w_k Ḡ(t,r_k)φ(r_k)` over the
/// atoms of `λ₀`, and likewise for `b`, `σ` (per Brownian component) and `l`.
///
/// Kernel outputs cover every atom at once: `g_kernel` writes
/// `atoms·n·n` values (atom-major, each block `n×n` row-major),
/// `sigma_kernel` writes `d·atoms·n·n` (component-major), `l_kernel` writes
/// `atoms·n`. Control derivatives are `n×m`, `d·n×m` and `m`.
pub trait CoefficientDerivatives: Send + Sync {
    fn lag_measures(&self) -> &LagMeasures;
    fn g_kernel(&self, t: GridPoint, x: &PathSegment, out: &mut [f64]);
    fn b_kernel(&self, t: GridPoint, x: &PathSegment, u: &[f64], out: &mut [f64]);
    fn sigma_kernel(&self, t: GridPoint, x: &PathSegment, u: &[f64], out: &mut [f64]);
    fn l_kernel(&self, t: GridPoint, x: &PathSegment, u: &[f64], out: &mut [f64]);
    fn b_u(&self, t: GridPoint, x: &PathSegment, u: &[f64], out: &mut [f64]);
    fn sigma_u(&self, t: GridPoint, x: &PathSegment, u: &[f64], out: &mut [f64]);
    fn l_u(&self, t: GridPoint, x: &PathSegment, u: &[f64], out: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeutralSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NeutralSettings {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 100,
        }
    }
}

/// Product of closed intervals `Π [lo_k, hi_k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ControlBoxRepr", into = "ControlBoxRepr")]
pub struct ControlBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlBoxRepr {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl TryFrom<ControlBoxRepr> for ControlBox {
    type Error = Error;
    fn try_from(r: ControlBoxRepr) -> Result<Self> {
        ControlBox::new(r.lo, r.hi)
    }
}

impl From<ControlBox> for ControlBoxRepr {
    fn from(b: ControlBox) -> Self {
        ControlBoxRepr { lo: b.lo, hi: b.hi }
    }
}

impl ControlBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Dimension(format!(
                "control box bounds have lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for (k, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if a.is_nan() || b.is_nan() || a > b {
                return Err(Error::Precondition(format!(
                    "control box component {k}: lower bound {a} above upper bound {b}"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn symmetric(m: usize, half_width: f64) -> Self {
        Self::new(vec![-half_width; m], vec![half_width; m]).expect("symmetric box is valid")
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn project_value(&self, u: &mut [f64]) {
        for ((x, a), b) in u.iter_mut().zip(&self.lo).zip(&self.hi) {
            *x = x.clamp(*a, *b);
        }
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.iter()
            .zip(&self.lo)
            .zip(&self.hi)
            .all(|((x, a), b)| x >= a && x <= b)
    }

    /// Componentwise clamp of every node value.
    pub fn project(&self, u: &ControlProcess) -> ControlProcess {
        let mut out = u.clone();
        for level in out.lo()..=out.hi() {
            for chunk in out.level_mut(level).chunks_mut(self.dim()) {
                self.project_value(chunk);
            }
        }
        out
    }

    pub fn contains_process(&self, u: &ControlProcess) -> bool {
        (u.lo()..=u.hi()).all(|l| u.level(l).chunks(self.dim()).all(|c| self.contains(c)))
    }
}

/// Control values on levels `0..N−1`.
pub type ControlProcess = AdaptedProcess;

pub fn constant_control(tree: &ScenarioTree, value: &[f64]) -> ControlProcess {
    let n = tree.steps() as isize;
    let mut u = tree.zeros(0, n - 1, value.len());
    for level in 0..n {
        for chunk in u.level_mut(level).chunks_mut(value.len()) {
            chunk.copy_from_slice(value);
        }
    }
    u
}

/// A controlled neutral equation on a fixed grid.
#[derive(Clone)]
pub struct NsfdeProblem {
    pub grid: TimeGrid,
    pub coefficients: Arc<dyn Coefficients>,
    /// `φ` at indices `−L..=0`, oldest first.
    pub initial: Vec<Vec<f64>>,
    pub control_box: ControlBox,
    pub neutral: NeutralSettings,
}

impl std::fmt::Debug for NsfdeProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NsfdeProblem")
            .field("grid", &self.grid)
            .field("state_dim", &self.coefficients.state_dim())
            .field("control_dim", &self.coefficients.control_dim())
            .field("noise_dim", &self.coefficients.noise_dim())
            .field("initial", &self.initial)
            .field("control_box", &self.control_box)
            .finish()
    }
}

impl NsfdeProblem {
    pub fn new(
        grid: TimeGrid,
        coefficients: Arc<dyn Coefficients>,
        initial: Vec<Vec<f64>>,
        control_box: ControlBox,
    ) -> Result<Self> {
        let p = Self {
            grid,
            coefficients,
            initial,
            control_box,
            neutral: NeutralSettings::default(),
        };
        p.validate()?;
        Ok(p)
    }

    /// Same problem with the constant initial path `φ ≡ x0`.
    pub fn with_constant_initial(
        grid: TimeGrid,
        coefficients: Arc<dyn Coefficients>,
        x0: &[f64],
        control_box: ControlBox,
    ) -> Result<Self> {
        let initial = vec![x0.to_vec(); grid.delay_steps() + 1];
        Self::new(grid, coefficients, initial, control_box)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.coefficients;
        let kappa = c.kappa();
        if !(0.0..1.0).contains(&kappa) {
            return Err(Error::NotContractive(kappa));
        }
        if self.initial.len() != self.grid.delay_steps() + 1 {
            return Err(Error::Dimension(format!(
                "initial path needs {} values, got {}",
                self.grid.delay_steps() + 1,
                self.initial.len()
            )));
        }
        if self.initial.iter().any(|x| x.len() != c.state_dim()) {
            return Err(Error::Dimension(format!(
                "initial path values must have dimension {}",
                c.state_dim()
            )));
        }
        if self.control_box.dim() != c.control_dim() {
            return Err(Error::Dimension(format!(
                "control box has dimension {}, the problem has {} controls",
                self.control_box.dim(),
                c.control_dim()
            )));
        }
        if let Some(der) = c.derivatives() {
            der.lag_measures().check_support(self.grid.delay_steps())?;
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.coefficients.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.coefficients.control_dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.coefficients.noise_dim()
    }

    pub fn check_tree(&self, tree: &ScenarioTree) -> Result<()> {
        if tree.grid() != &self.grid {
            return Err(Error::Precondition("tree and problem use different grids".into()));
        }
        if tree.brownian_dim() != self.noise_dim() {
            return Err(Error::Dimension(format!(
                "tree has {} Brownian components, the problem expects {}",
                tree.brownian_dim(),
                self.noise_dim()
            )));
        }
        Ok(())
    }

    pub fn check_control(&self, tree: &ScenarioTree, u: &ControlProcess) -> Result<()> {
        let n = tree.steps() as isize;
        if u.dim() != self.control_dim() || u.lo() > 0 || u.hi() < n - 1 {
            return Err(Error::Dimension(format!(
                "control must carry {} components on levels 0..={}",
                self.control_dim(),
                n - 1
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_is_an_idempotent_clamp() {
        let b = ControlBox::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        let mut u = [3.0, -0.5];
        b.project_value(&mut u);
        assert_eq!(u, [1.0, 0.0]);
        let mut v = u;
        b.project_value(&mut v);
        assert_eq!(u, v);
        assert!(ControlBox::new(vec![1.0], vec![0.0]).is_err());
        assert!(ControlBox::new(vec![1.0], vec![]).is_err());
    }

    #[test]
    fn box_serde() {
        let b: ControlBox = serde_json::from_str(r#"{"lo":[-10],"hi":[10]}"#).unwrap();
        assert_eq!(b.lo(), &[-10.0]);
        assert!(serde_json::from_str::<ControlBox>(r#"{"lo":[1],"hi":[0]}"#).is_err());
    }
}
