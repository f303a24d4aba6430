//! Coefficients in composition form: every path functional is a scalar
//! nonlinearity applied to a finite lag combination `Σ_k w_k A(t, r_k) X(t − r_k)`,
//! so all derivative kernels are available in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{CoefficientDerivatives, Coefficients, LagMeasures};
use crate::grid::{DiscreteLagMeasure, GridPoint, PathSegment};
use crate::linalg::{matvec_acc, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Nonlinearity {
    #[default]
    Identity,
    Tanh,
    Sin,
}

impl Nonlinearity {
    pub fn value(self, y: f64) -> f64 {
        match self {
            Nonlinearity::Identity => y,
            Nonlinearity::Tanh => y.tanh(),
            Nonlinearity::Sin => y.sin(),
        }
    }

    pub fn derivative(self, y: f64) -> f64 {
        match self {
            Nonlinearity::Identity => 1.0,
            Nonlinearity::Tanh => 1.0 - y.tanh().powi(2),
            Nonlinearity::Sin => y.cos(),
        }
    }

    /// `sup |φ'|`.
    pub fn slope_bound(self) -> f64 {
        1.0
    }
}

/// A matrix that is either constant or tabulated per grid step (the last
/// entry is reused beyond the table).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeMatrix {
    Constant(Matrix),
    Table(Vec<Matrix>),
}

impl TimeMatrix {
    pub fn at(&self, t: GridPoint) -> &Matrix {
        match self {
            TimeMatrix::Constant(m) => m,
            TimeMatrix::Table(v) => &v[(t.index.max(0) as usize).min(v.len() - 1)],
        }
    }

    fn check(&self, rows: usize, cols: usize, what: &str) -> Result<()> {
        match self {
            TimeMatrix::Constant(m) => m.check_shape(rows, cols, what),
            TimeMatrix::Table(v) if v.is_empty() => Err(Error::Dimension(format!("{what}: empty table"))),
            TimeMatrix::Table(v) => v.iter().try_for_each(|m| m.check_shape(rows, cols, what)),
        }
    }

    fn sup_frobenius(&self) -> f64 {
        match self {
            TimeMatrix::Constant(m) => m.frobenius(),
            TimeMatrix::Table(v) => v.iter().map(Matrix::frobenius).fold(0.0, f64::max),
        }
    }
}

/// `s·φ(Σ_k w_k A_k(t) X(t − r_k) + a)`, componentwise in `φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathMap {
    pub measure: DiscreteLagMeasure,
    /// One `n×n` matrix per atom of `measure`.
    pub matrices: Vec<TimeMatrix>,
    #[serde(default)]
    pub offset: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub phi: Nonlinearity,
}

fn one() -> f64 {
    1.0
}

impl PathMap {
    pub fn new(measure: DiscreteLagMeasure, matrices: Vec<TimeMatrix>) -> Self {
        Self {
            measure,
            matrices,
            offset: None,
            scale: 1.0,
            phi: Nonlinearity::Identity,
        }
    }

    /// The constant map `x ↦ a`.
    pub fn constant(n: usize, a: Vec<f64>) -> Self {
        Self {
            offset: Some(a),
            ..Self::new(DiscreteLagMeasure::dirac(0), vec![TimeMatrix::Constant(Matrix::zeros(n, n))])
        }
    }

    /// `x ↦ Σ_k w_k A_k X(t − r_k)` with constant matrices.
    pub fn linear(measure: DiscreteLagMeasure, matrices: Vec<Matrix>) -> Self {
        Self::new(measure, matrices.into_iter().map(TimeMatrix::Constant).collect())
    }

    pub fn with_offset(mut self, a: Vec<f64>) -> Self {
        self.offset = Some(a);
        self
    }

    pub fn with_scale(mut self, s: f64, phi: Nonlinearity) -> Self {
        self.scale = s;
        self.phi = phi;
        self
    }

    fn check(&self, n: usize, what: &str) -> Result<()> {
        if self.matrices.len() != self.measure.len() {
            return Err(Error::Dimension(format!(
                "{what}: {} matrices for {} lag atoms",
                self.matrices.len(),
                self.measure.len()
            )));
        }
        for m in &self.matrices {
            m.check(n, n, what)?;
        }
        if let Some(a) = &self.offset {
            if a.len() != n {
                return Err(Error::Dimension(format!("{what}: offset needs {n} entries")));
            }
        }
        if !self.scale.is_finite() {
            return Err(Error::Precondition(format!("{what}: scale must be finite")));
        }
        Ok(())
    }

    fn inner(&self, t: GridPoint, x: &PathSegment, out: &mut [f64]) {
        let n = out.len();
        match &self.offset {
            Some(a) => out.copy_from_slice(a),
            None => out.fill(0.0),
        }
        for (atom, m) in self.measure.atoms().iter().zip(&self.matrices) {
            matvec_acc(out, &m.at(t).flat(), n, n, x.lag(atom.lag), atom.weight);
        }
    }

    pub fn eval(&self, t: GridPoint, x: &PathSegment, out: &mut [f64]) {
        self.inner(t, x, out);
        for v in out.iter_mut() {
            *v = self.scale * self.phi.value(*v);
        }
    }

    /// `s·diag(φ'(y))·A_k(t)` for every atom, atom-major.
    pub fn kernel(&self, t: GridPoint, x: &PathSegment, n: usize, out: &mut [f64]) {
        let mut y = vec![0.0; n];
        self.inner(t, x, &mut y);
        let slope: Vec<f64> = y.iter().map(|v| self.scale * self.phi.derivative(*v)).collect();
        for (k, m) in self.matrices.iter().enumerate() {
            let a = m.at(t);
            for r in 0..n {
                for c in 0..n {
                    out[k * n * n + r * n + c] = slope[r] * a.0[r][c];
                }
            }
        }
    }

    /// `|s|·sup|φ'|·Σ_k w_k sup_t |A_k(t)|_F`.
    pub fn lipschitz_bound(&self) -> f64 {
        let mass: f64 = self
            .measure
            .atoms()
            .iter()
            .zip(&self.matrices)
            .map(|(a, m)| a.weight * m.sup_frobenius())
            .sum();
        self.scale.abs() * self.phi.slope_bound() * mass
    }
}

/// `l = y'Qy + q'y + (u − c)'R(u − c)` with `y = Σ_k w_k A_k(t) X(t − r_k) + a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub measure: DiscreteLagMeasure,
    pub matrices: Vec<TimeMatrix>,
    #[serde(default)]
    pub offset: Option<Vec<f64>>,
    pub state_weight: Matrix,
    #[serde(default)]
    pub state_linear: Option<Vec<f64>>,
    pub control_weight: Matrix,
    #[serde(default)]
    pub control_target: Option<Vec<f64>>,
}

impl CostSpec {
    /// `y'Qy + (u − c)'R(u − c)` with `y = X(t)`.
    pub fn quadratic(state_weight: Matrix, control_weight: Matrix) -> Self {
        let n = state_weight.rows();
        Self {
            measure: DiscreteLagMeasure::dirac(0),
            matrices: vec![TimeMatrix::Constant(Matrix::identity(n))],
            offset: None,
            state_weight,
            state_linear: None,
            control_weight,
            control_target: None,
        }
    }

    fn as_map(&self) -> PathMap {
        PathMap {
            measure: self.measure.clone(),
            matrices: self.matrices.clone(),
            offset: self.offset.clone(),
            scale: 1.0,
            phi: Nonlinearity::Identity,
        }
    }
}

/// Coefficients of composition type, validated against their dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositionSpec {
    pub state_dim: usize,
    pub control_dim: usize,
    pub noise_dim: usize,
    /// `g`; absent means `g ≡ 0`.
    #[serde(default)]
    pub neutral: Option<PathMap>,
    pub drift: PathMap,
    /// `n×m`, added to the drift as `B_u·u`.
    pub drift_control: Matrix,
    /// One map per Brownian component; all share one lag measure.
    pub diffusion: Vec<PathMap>,
    /// One `n×m` matrix per Brownian component.
    pub diffusion_control: Vec<Matrix>,
    pub cost: CostSpec,
}

#[derive(Debug, Clone)]
pub struct Composition {
    spec: CompositionSpec,
    measures: LagMeasures,
    kappa: f64,
}

impl Composition {
    pub fn new(spec: CompositionSpec) -> Result<Self> {
        let (n, m, d) = (spec.state_dim, spec.control_dim, spec.noise_dim);
        if n == 0 || m == 0 || d == 0 {
            return Err(Error::Dimension("state, control and noise dimensions must be positive".into()));
        }
        if let Some(g) = &spec.neutral {
            g.check(n, "neutral")?;
        }
        spec.drift.check(n, "drift")?;
        spec.drift_control.check_shape(n, m, "drift control")?;
        if spec.diffusion.len() != d || spec.diffusion_control.len() != d {
            return Err(Error::Dimension(format!("diffusion needs {d} components")));
        }
        for (c, (s, su)) in spec.diffusion.iter().zip(&spec.diffusion_control).enumerate() {
            s.check(n, &format!("diffusion {c}"))?;
            su.check_shape(n, m, &format!("diffusion control {c}"))?;
            if s.measure != spec.diffusion[0].measure {
                return Err(Error::InvalidMeasure("all diffusion components must share one lag measure".into()));
            }
        }
        let cost = &spec.cost;
        cost.as_map().check(n, "cost")?;
        cost.state_weight.check_shape(n, n, "state weight")?;
        cost.control_weight.check_shape(m, m, "control weight")?;
        if cost.state_linear.as_ref().is_some_and(|q| q.len() != n) {
            return Err(Error::Dimension("state_linear needs one entry per state".into()));
        }
        if cost.control_target.as_ref().is_some_and(|c| c.len() != m) {
            return Err(Error::Dimension("control_target needs one entry per control".into()));
        }
        let kappa = spec.neutral.as_ref().map_or(0.0, PathMap::lipschitz_bound);
        let measures = LagMeasures {
            g: spec
                .neutral
                .as_ref()
                .map_or_else(|| DiscreteLagMeasure::dirac(0), |g| g.measure.clone()),
            b: spec.drift.measure.clone(),
            sigma: spec.diffusion[0].measure.clone(),
            cost: cost.measure.clone(),
        };
        Ok(Self { spec, measures, kappa })
    }

    pub fn spec(&self) -> &CompositionSpec {
        &self.spec
    }

    fn cost_inner(&self, t: GridPoint, x: &PathSegment) -> Vec<f64> {
        let mut y = vec![0.0; self.spec.state_dim];
        self.spec.cost.as_map().inner(t, x, &mut y);
        y
    }

    fn control_gap(&self, u: &[f64]) -> Vec<f64> {
        match &self.spec.cost.control_target {
            Some(c) => u.iter().zip(c).map(|(a, b)| a - b).collect(),
            None => u.to_vec(),
        }
    }
}

fn quad(m: &Matrix, x: &[f64]) -> f64 {
    let mut y = vec![0.0; x.len()];
    matvec_acc(&mut y, &m.flat(), m.rows(), m.cols(), x, 1.0);
    crate::linalg::dot(x, &y)
}

/// `(M + M')·x`.
fn sym_apply(m: &Matrix, x: &[f64]) -> Vec<f64> {
    let k = x.len();
    let mut y = vec![0.0; k];
    for r in 0..k {
        for c in 0..k {
            y[r] += (m.0[r][c] + m.0[c][r]) * x[c];
        }
    }
    y
}

impl Coefficients for Composition {
    fn state_dim(&self) -> usize {
        self.spec.state_dim
    }

    fn control_dim(&self) -> usize {
        self.spec.control_dim
    }

    fn noise_dim(&self) -> usize {
        self.spec.noise_dim
    }

    fn kappa(&self) -> f64 {
        self.kappa
    }

    fn g(&self, t: GridPoint, x: &PathSegment, out: &mut [f64]) {
        match &self.spec.neutral {
            Some(g) => g.eval(t, x, out),
            None => out.fill(0.0),
        }
    }

    fn b(&self, t: GridPoint, x: &PathSegment, u: &[f64], out: &mut [f64]) {
        let n = self.spec.state_dim;
        self.spec.drift.eval(t, x, out);
        matvec_acc(out, &self.spec.drift_control.flat(), n, self.spec.control_dim, u, 1.0);
    }

    fn sigma(&self, t: GridPoint, x: &PathSegment, u: &[f64], out: &mut [f64]) {
        let n = self.spec.state_dim;
        let d = self.spec.noise_dim;
        let mut col = vec![0.0; n];
        for (c, (s, su)) in self.spec.diffusion.iter().zip(&self.spec.diffusion_control).enumerate() {
            s.eval(t, x, &mut col);
            matvec_acc(&mut col, &su.flat(), n, self.spec.control_dim, u, 1.0);
            for r in 0..n {
                out[r * d + c] = col[r];
            }
        }
    }

    fn running_cost(&self, t: GridPoint, x: &PathSegment, u: &[f64]) -> f64 {
        let cost = &self.spec.cost;
        let y = self.cost_inner(t, x);
        let lin = cost.state_linear.as_ref().map_or(0.0, |q| crate::linalg::dot(q, &y));
        quad(&cost.state_weight, &y) + lin + quad(&cost.control_weight, &self.control_gap(u))
    }

    fn derivatives(&self) -> Option<&dyn CoefficientDerivatives> {
        Some(self)
    }
}

impl CoefficientDerivatives for Composition {
    fn lag_measures(&self) -> &LagMeasures {
        &self.measures
    }

    fn g_kernel(&self, t: GridPoint, x: &PathSegment, out: &mut [f64]) {
        match &self.spec.neutral {
            Some(g) => g.kernel(t, x, self.spec.state_dim, out),
            None => out.fill(0.0),
        }
    }

    fn b_kernel(&self, t: GridPoint, x: &PathSegment, _u: &[f64], out: &mut [f64]) {
        self.spec.drift.kernel(t, x, self.spec.state_dim, out);
    }

    fn sigma_kernel(&self, t: GridPoint, x: &PathSegment, _u: &[f64], out: &mut [f64]) {
        let n = self.spec.state_dim;
        let block = self.measures.sigma.len() * n * n;
        for (c, s) in self.spec.diffusion.iter().enumerate() {
            s.kernel(t, x, n, &mut out[c * block..(c + 1) * block]);
        }
    }

    fn l_kernel(&self, t: GridPoint, x: &PathSegment, _u: &[f64], out: &mut [f64]) {
        let n = self.spec.state_dim;
        let cost = &self.spec.cost;
        let y = self.cost_inner(t, x);
        let mut grad = sym_apply(&cost.state_weight, &y);
        if let Some(q) = &cost.state_linear {
            for (g, v) in grad.iter_mut().zip(q) {
                *g += v;
            }
        }
        for (k, m) in cost.matrices.iter().enumerate() {
            let a = m.at(t);
            for c in 0..n {
                out[k * n + c] = (0..n).map(|r| grad[r] * a.0[r][c]).sum();
            }
        }
    }

    fn b_u(&self, _t: GridPoint, _x: &PathSegment, _u: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.spec.drift_control.flat());
    }

    fn sigma_u(&self, _t: GridPoint, _x: &PathSegment, _u: &[f64], out: &mut [f64]) {
        let block = self.spec.state_dim * self.spec.control_dim;
        for (c, su) in self.spec.diffusion_control.iter().enumerate() {
            out[c * block..(c + 1) * block].copy_from_slice(&su.flat());
        }
    }

    fn l_u(&self, _t: GridPoint, _x: &PathSegment, u: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&sym_apply(&self.spec.cost.control_weight, &self.control_gap(u)));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Direction;

    fn seg(v: &[f64]) -> PathSegment {
        PathSegment::from_lags(Direction::Backward, &v.iter().map(|x| vec![*x]).collect::<Vec<_>>())
    }

    fn pt(i: isize) -> GridPoint {
        GridPoint { index: i, time: 0.1 * i as f64 }
    }

    #[test]
    fn tanh_kernel_is_the_chain_rule() {
        let g = PathMap::linear(DiscreteLagMeasure::uniform(&[0, 2]).unwrap(), vec![Matrix::scalar(1.0); 2])
            .with_scale(0.5, Nonlinearity::Tanh);
        let x = seg(&[0.3, -0.1, 0.8]);
        let ybar: f64 = 0.5 * 0.3 + 0.5 * 0.8;
        let mut k = vec![0.0; 2];
        g.kernel(pt(0), &x, 1, &mut k);
        let expected = 0.5 * (1.0 - ybar.tanh().powi(2));
        assert!((k[0] - expected).abs() < 1e-15 && (k[1] - expected).abs() < 1e-15);
        assert!((g.lipschitz_bound() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kernels_match_finite_differences() {
        let spec = CompositionSpec {
            state_dim: 1,
            control_dim: 1,
            noise_dim: 1,
            neutral: None,
            drift: PathMap::linear(DiscreteLagMeasure::uniform(&[0, 1]).unwrap(), vec![Matrix::scalar(1.0); 2])
                .with_scale(1.0, Nonlinearity::Sin),
            drift_control: Matrix::scalar(1.0),
            diffusion: vec![PathMap::constant(1, vec![0.5])],
            diffusion_control: vec![Matrix::scalar(0.2)],
            cost: CostSpec::quadratic(Matrix::scalar(1.0), Matrix::scalar(2.0)),
        };
        let c = Composition::new(spec).unwrap();
        let x = [0.4, -0.7];
        let u = [0.3];
        let mut bk = vec![0.0; 2];
        c.b_kernel(pt(1), &seg(&x), &u, &mut bk);
        let eps = 1e-6;
        for (k, atom) in c.lag_measures().b.atoms().iter().enumerate() {
            let mut xp = x;
            let mut xm = x;
            xp[atom.lag] += eps;
            xm[atom.lag] -= eps;
            let (mut bp, mut bm) = ([0.0], [0.0]);
            c.b(pt(1), &seg(&xp), &u, &mut bp);
            c.b(pt(1), &seg(&xm), &u, &mut bm);
            let fd = (bp[0] - bm[0]) / (2.0 * eps);
            assert!((fd - atom.weight * bk[k]).abs() < 1e-8);
        }
        let mut lu = [0.0];
        c.l_u(pt(1), &seg(&x), &u, &mut lu);
        assert!((lu[0] - 4.0 * 0.3).abs() < 1e-15);
        let mut lk = [0.0];
        c.l_kernel(pt(1), &seg(&x), &u, &mut lk);
        assert!((lk[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn time_tables_parse_and_index() {
        let m: TimeMatrix = serde_json::from_str("[[[1.0]], [[2.0]]]").unwrap();
        assert_eq!(m.at(pt(0)).0[0][0], 1.0);
        assert_eq!(m.at(pt(7)).0[0][0], 2.0);
        let c: TimeMatrix = serde_json::from_str("[[3.0]]").unwrap();
        assert_eq!(c.at(pt(4)).0[0][0], 3.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = r#"{"measure": [[0, 1.0]], "matrices": [[[1.0]]], "bogus": 1}"#;
        assert!(serde_json::from_str::<PathMap>(bad).is_err());
    }
}
