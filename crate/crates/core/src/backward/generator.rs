use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DiscreteLagMeasure, GridPoint, PathSegment};
use crate::process::{AdaptedProcess, NodeRef};
use crate::tree::ScenarioTree;
use crate::two_param::TwoParamProcess;

/// Lag measures of a generator: `ϱ₀` for the neutral kernel, `ϱ₁` for the
/// forward `Y` window, `ϱ₂` for the diagonal block of `Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMeasures {
    pub neutral: DiscreteLagMeasure,
    pub forward: DiscreteLagMeasure,
    pub diagonal: DiscreteLagMeasure,
}

impl GeneratorMeasures {
    pub fn dirac_zero() -> Self {
        let d = DiscreteLagMeasure::dirac(0);
        Self {
            neutral: d.clone(),
            forward: d.clone(),
            diagonal: d,
        }
    }
}

/// Measurable kernels `J` and `F` of a neutral backward Volterra equation
///
/// `Y(t) − E_t[J(t, Y_t)] = Ψ(t) + ∫_t^T E_s[F(t, s, ·)] ds − ∫_t^T Z(t,s) dW(s)`.
///
/// On the grid the driver integral is the explicit sum over `s_j`,
/// `j = i..N−1`, of `E_{s_j}[F]·dt`, where `F` receives the forward window
/// of `Y` starting at `s_{j+1}`, the value `Z(t_i, s_j)`, and the diagonal
/// block `Z(s_{j+1+u}, t_{i+u})` for `u = 0..=L` (only the atoms of `ϱ₂`
/// may matter). `J` receives the window of `Y` starting at `t_i`.
///
/// Callbacks are evaluated at a node `at` fine enough to see every argument:
/// level `min(i+L, N)` for `J`, `min(j+1+L, N)` for `F`. Windows are indexed
/// by lag and read zero beyond `T+δ`.
pub trait Generator: Send + Sync {
    fn dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    /// `κ` with `|J(φ) − J(φ̄)|² ≤ κ ∫ |φ − φ̄|² dϱ₀`.
    fn kappa(&self) -> f64;
    /// `L` with `|F − F̄|² ≤ L(∫|y − ȳ|²dϱ₁ + |z − z̄|² + ∫|ζ − ζ̄|²dϱ₂)`.
    fn lipschitz(&self) -> f64;
    fn measures(&self) -> &GeneratorMeasures;

    fn neutral(&self, t: GridPoint, at: NodeRef, y: &PathSegment, out: &mut [f64]);

    #[allow(clippy::too_many_arguments)]
    fn driver(
        &self,
        t: GridPoint,
        s: GridPoint,
        at: NodeRef,
        y: &PathSegment,
        z: &[f64],
        diag: &PathSegment,
        out: &mut [f64],
    );

    /// `false` when `J ≡ 0`; lets the solver skip the evaluation.
    fn has_neutral(&self) -> bool {
        true
    }

    /// `false` when `F ≡ 0`.
    fn has_driver(&self) -> bool {
        true
    }
}

/// `Ψ(t_i)` for `i = 0..=N` and `ξ(t_i)` for `i = N+1..=N+L`, each stored as
/// leaf values (`2^{dN}·n` numbers).
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalData {
    pub psi: Vec<Vec<f64>>,
    pub xi: Vec<Vec<f64>>,
}

impl TerminalData {
    pub fn zeros(tree: &ScenarioTree, dim: usize) -> Self {
        let leaves = tree.node_count(tree.steps() as isize) * dim;
        Self {
            psi: vec![vec![0.0; leaves]; tree.steps() + 1],
            xi: vec![vec![0.0; leaves]; tree.grid().delay_steps()],
        }
    }

    /// Deterministic data: `psi[i]` for `i = 0..=N`, `xi[k]` for index `N+1+k`.
    pub fn deterministic(tree: &ScenarioTree, psi: &[Vec<f64>], xi: &[Vec<f64>]) -> Result<Self> {
        let leaves = tree.node_count(tree.steps() as isize);
        if psi.len() != tree.steps() + 1 || xi.len() != tree.grid().delay_steps() {
            return Err(Error::Dimension(format!(
                "terminal data needs {} Ψ values and {} ξ values",
                tree.steps() + 1,
                tree.grid().delay_steps()
            )));
        }
        let spread = |v: &Vec<f64>| v.repeat(leaves);
        Ok(Self {
            psi: psi.iter().map(spread).collect(),
            xi: xi.iter().map(spread).collect(),
        })
    }

    /// The same payoff for every `t_i ≤ T`, `ξ ≡ 0`.
    pub fn constant_payoff(tree: &ScenarioTree, payoff: Vec<f64>, dim: usize) -> Result<Self> {
        let mut t = Self::zeros(tree, dim);
        if t.psi[0].len() != payoff.len() {
            return Err(Error::Dimension("payoff must hold one value per leaf and component".into()));
        }
        for p in &mut t.psi {
            p.clone_from(&payoff);
        }
        Ok(t)
    }

    pub fn check(&self, tree: &ScenarioTree, dim: usize) -> Result<()> {
        let leaves = tree.node_count(tree.steps() as isize) * dim;
        if self.psi.len() != tree.steps() + 1
            || self.xi.len() != tree.grid().delay_steps()
            || self.psi.iter().chain(&self.xi).any(|v| v.len() != leaves)
        {
            return Err(Error::Dimension(format!(
                "terminal data must hold {} Ψ and {} ξ arrays of {leaves} values",
                tree.steps() + 1,
                tree.grid().delay_steps()
            )));
        }
        Ok(())
    }

    /// `Ψ(t_i)` for `i ≤ N`, `ξ(t_i)` above.
    pub fn at(&self, i: usize) -> &[f64] {
        if i < self.psi.len() {
            &self.psi[i]
        } else {
            &self.xi[i - self.psi.len()]
        }
    }
}

/// Adapted M-solution `(Y, Z)` on `[0, T+δ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MSolution {
    /// Levels `0..=N+L`.
    pub y: AdaptedProcess,
    pub z: TwoParamProcess,
}

/// `J(t, φ) = c·Σ_k w_k φ(u_k)` with `F ≡ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PureNeutralGenerator {
    pub coefficient: f64,
    pub dim: usize,
    pub measures: GeneratorMeasures,
}

impl PureNeutralGenerator {
    pub fn new(coefficient: f64, dim: usize, measure: DiscreteLagMeasure) -> Self {
        let mut measures = GeneratorMeasures::dirac_zero();
        measures.neutral = measure;
        Self {
            coefficient,
            dim,
            measures,
        }
    }
}

impl Generator for PureNeutralGenerator {
    fn dim(&self) -> usize {
        self.dim
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn kappa(&self) -> f64 {
        self.coefficient * self.coefficient
    }
    fn lipschitz(&self) -> f64 {
        0.0
    }
    fn measures(&self) -> &GeneratorMeasures {
        &self.measures
    }
    fn neutral(&self, _t: GridPoint, _at: NodeRef, y: &PathSegment, out: &mut [f64]) {
        out.fill(0.0);
        for a in self.measures.neutral.atoms() {
            for (o, v) in out.iter_mut().zip(y.lag(a.lag)) {
                *o += self.coefficient * a.weight * v;
            }
        }
    }
    fn driver(&self, _: GridPoint, _: GridPoint, _: NodeRef, _: &PathSegment, _: &[f64], _: &PathSegment, out: &mut [f64]) {
        out.fill(0.0);
    }
    fn has_driver(&self) -> bool {
        false
    }
}

/// `J ≡ c` (a constant shift) or `J ≡ 0`, with the BSDE-type driver
/// `F = a·Y(s)` evaluated on the window starting at `s_{j+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineScalarGenerator {
    pub shift: f64,
    pub rate: f64,
    pub measures: GeneratorMeasures,
}

impl AffineScalarGenerator {
    pub fn new(shift: f64, rate: f64) -> Self {
        Self {
            shift,
            rate,
            measures: GeneratorMeasures::dirac_zero(),
        }
    }
}

impl Generator for AffineScalarGenerator {
    fn dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn kappa(&self) -> f64 {
        0.0
    }
    fn lipschitz(&self) -> f64 {
        self.rate * self.rate
    }
    fn measures(&self) -> &GeneratorMeasures {
        &self.measures
    }
    fn neutral(&self, _: GridPoint, _: NodeRef, _: &PathSegment, out: &mut [f64]) {
        out[0] = self.shift;
    }
    fn driver(&self, _: GridPoint, _: GridPoint, _: NodeRef, y: &PathSegment, _: &[f64], _: &PathSegment, out: &mut [f64]) {
        out[0] = self.rate * y.lag(0)[0];
    }
    fn has_neutral(&self) -> bool {
        self.shift != 0.0
    }
    fn has_driver(&self) -> bool {
        self.rate != 0.0
    }
}
