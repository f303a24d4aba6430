//! Time discretization of `[−δ, T+δ]`, atomic lag measures on `[0, δ]`, and
//! read-only path windows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::{AdaptedProcess, NodeRef};

/// Uniform grid with `steps` intervals on `[0, T]` and a delay of
/// `delay_steps` intervals. Grid index `i` sits at time `i·dt`; negative
/// indices address the initial history and indices above `steps` the
/// terminal extension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
    delay_steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize, delay_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::InvalidGrid("at least one time step is required".into()));
        }
        if delay_steps > steps {
            return Err(Error::InvalidGrid(format!(
                "delay of {delay_steps} steps exceeds the horizon of {steps} steps"
            )));
        }
        Ok(Self {
            horizon,
            steps,
            delay_steps,
            dt: horizon / steps as f64,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of steps `N` on `[0, T]`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Delay `L` in steps.
    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn delta(&self) -> f64 {
        self.delay_steps as f64 * self.dt
    }

    /// Time of grid index `i`; `time(N)` is `T` exactly.
    pub fn time(&self, i: isize) -> f64 {
        if i == self.steps as isize {
            self.horizon
        } else {
            self.horizon * i as f64 / self.steps as f64
        }
    }

    pub fn point(&self, i: isize) -> GridPoint {
        GridPoint {
            index: i,
            time: self.time(i),
        }
    }

    /// Last index of the backward horizon `T + δ`.
    pub fn extended_end(&self) -> usize {
        self.steps + self.delay_steps
    }
}

/// A grid index together with its time value, handed to coefficient callbacks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub index: isize,
    pub time: f64,
}

/// One atom `(k, w)` of a lag measure: mass `w` at lag `k·dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagAtom {
    pub lag: usize,
    pub weight: f64,
}

/// Probability measure on `[0, δ]` supported on grid lags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(usize, f64)>", into = "Vec<(usize, f64)>")]
pub struct DiscreteLagMeasure {
    atoms: Vec<LagAtom>,
}

const MASS_TOLERANCE: f64 = 1e-14;

impl DiscreteLagMeasure {
    pub fn new(atoms: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let atoms: Vec<LagAtom> = atoms
            .into_iter()
            .map(|(lag, weight)| LagAtom { lag, weight })
            .collect();
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("a probability measure needs at least one atom".into()));
        }
        for a in &atoms {
            if !(a.weight.is_finite() && a.weight >= 0.0) {
                return Err(Error::InvalidMeasure(format!(
                    "weight {} at lag {} is not a nonnegative number",
                    a.weight, a.lag
                )));
            }
        }
        if atoms.windows(2).any(|w| w[0].lag >= w[1].lag) {
            return Err(Error::InvalidMeasure("lag indices must be strictly increasing".into()));
        }
        let mass: f64 = atoms.iter().map(|a| a.weight).sum();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {mass}, a probability measure needs total mass 1"
            )));
        }
        Ok(Self { atoms })
    }

    pub fn dirac(lag: usize) -> Self {
        Self {
            atoms: vec![LagAtom { lag, weight: 1.0 }],
        }
    }

    /// Equal weights on the given strictly increasing lags.
    pub fn uniform(lags: &[usize]) -> Result<Self> {
        let w = 1.0 / lags.len().max(1) as f64;
        let mut atoms: Vec<(usize, f64)> = lags.iter().map(|&k| (k, w)).collect();
        // Absorb rounding so the total mass is 1 to the last bit we can manage.
        if let Some(last) = atoms.last_mut() {
            let head: f64 = lags[..lags.len() - 1].iter().map(|_| w).sum();
            last.1 = 1.0 - head;
        }
        Self::new(atoms)
    }

    pub fn atoms(&self) -> &[LagAtom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn max_lag(&self) -> usize {
        self.atoms.last().map_or(0, |a| a.lag)
    }

    /// Mass at lag zero (the implicit part of a neutral term).
    pub fn mass_at_zero(&self) -> f64 {
        self.atoms
            .iter()
            .find(|a| a.lag == 0)
            .map_or(0.0, |a| a.weight)
    }

    pub fn check_support(&self, delay_steps: usize) -> Result<()> {
        if self.max_lag() > delay_steps {
            return Err(Error::InvalidMeasure(format!(
                "atom at lag {} lies beyond the delay of {delay_steps} steps",
                self.max_lag()
            )));
        }
        Ok(())
    }

    /// `Σ w_k f(k)` in ascending lag order, `f` indexed by lag.
    pub fn integrate(&self, f: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for a in &self.atoms {
            let v = f.get(a.lag).ok_or(Error::MissingSample { lag: a.lag })?;
            acc += a.weight * v;
        }
        Ok(acc)
    }
}

impl TryFrom<Vec<(usize, f64)>> for DiscreteLagMeasure {
    type Error = Error;

    fn try_from(v: Vec<(usize, f64)>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DiscreteLagMeasure> for Vec<(usize, f64)> {
    fn from(m: DiscreteLagMeasure) -> Self {
        m.atoms.into_iter().map(|a| (a.lag, a.weight)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `X^t`: lag `r` reads index `t − r`.
    Backward,
    /// `Y_t`: lag `r` reads index `t + r`.
    Forward,
}

/// How a window is closed outside the stored range of a process.
#[derive(Debug, Clone, Copy)]
pub enum Extension<'a> {
    Zero,
    /// Deterministic values for consecutive indices starting at `first`.
    Table { first: isize, values: &'a [Vec<f64>] },
}

/// `L+1` consecutive values of a process seen from one node, indexed by lag.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSegment {
    direction: Direction,
    dim: usize,
    data: Vec<f64>,
}

impl PathSegment {
    pub fn new(direction: Direction, dim: usize, lags: usize) -> Self {
        Self {
            direction,
            dim,
            data: vec![0.0; dim * lags],
        }
    }

    pub fn from_lags(direction: Direction, lags: &[Vec<f64>]) -> Self {
        let dim = lags.first().map_or(0, Vec::len);
        Self {
            direction,
            dim,
            data: lags.iter().flatten().copied().collect(),
        }
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Window length `L + 1`.
    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn lag(&self, r: usize) -> &[f64] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub(crate) fn lag_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.dim..(r + 1) * self.dim]
    }

    /// Same window with the lag-0 entry replaced (neutral fixed points).
    pub fn with_endpoint(&self, x: &[f64]) -> Self {
        let mut s = self.clone();
        s.lag_mut(0).copy_from_slice(x);
        s
    }

    /// Component `c` across lags.
    pub fn component(&self, c: usize) -> Vec<f64> {
        (0..self.len()).map(|r| self.lag(r)[c]).collect()
    }
}

/// Window of `proc` around index `t` as seen from node `at`.
///
/// `at` must be at least as fine as every stored level the window touches;
/// in practice that is level `t` for backward windows and `min(t+L, N)` for
/// forward ones.
pub fn segment_view(
    proc: &AdaptedProcess,
    grid: &TimeGrid,
    t: isize,
    at: NodeRef,
    direction: Direction,
    extension: Extension<'_>,
) -> PathSegment {
    let lags = grid.delay_steps() + 1;
    let dim = proc.dim();
    let mut seg = PathSegment::new(direction, dim, lags);
    for r in 0..lags {
        let level = match direction {
            Direction::Backward => t - r as isize,
            Direction::Forward => t + r as isize,
        };
        let slot = seg.lag_mut(r);
        if proc.contains_level(level) {
            slot.copy_from_slice(proc.value_seen_from(level, at));
        } else if let Extension::Table { first, values } = extension {
            let k = level - first;
            if k >= 0 && (k as usize) < values.len() {
                slot.copy_from_slice(&values[k as usize]);
            }
        }
    }
    seg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_arithmetic() {
        let g = TimeGrid::new(1.0, 4, 0).unwrap();
        assert_eq!(g.dt(), 0.25);
        assert_eq!(g.delta(), 0.0);
        let g = TimeGrid::new(1.0, 4, 2).unwrap();
        assert_eq!(g.dt(), 0.25);
        assert_eq!(g.delta(), 0.5);
        assert_eq!(g.time(4), 1.0);
        let g = TimeGrid::new(0.7, 3, 1).unwrap();
        assert_eq!(g.time(3), 0.7);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(TimeGrid::new(1.0, 0, 0).is_err());
        assert!(TimeGrid::new(1.0, 4, 5).is_err());
        assert!(TimeGrid::new(0.0, 4, 0).is_err());
        assert!(TimeGrid::new(f64::NAN, 4, 0).is_err());
    }

    #[test]
    fn measure_integration() {
        let dirac = DiscreteLagMeasure::dirac(0);
        assert_eq!(dirac.integrate(&[7.5, 100.0]).unwrap(), 7.5);
        let m = DiscreteLagMeasure::new([(0, 0.5), (1, 0.5)]).unwrap();
        assert_eq!(m.integrate(&[2.0, 4.0]).unwrap(), 3.0);
        let m = DiscreteLagMeasure::new([(0, 0.25), (2, 0.75)]).unwrap();
        assert_eq!(m.integrate(&[1.0, -3.0, 5.0]).unwrap(), 4.0);
        assert_eq!(
            m.integrate(&[1.0, 2.0]),
            Err(Error::MissingSample { lag: 2 })
        );
    }

    #[test]
    fn measure_validation() {
        assert!(DiscreteLagMeasure::new([(0, 0.5), (1, 0.4)]).is_err());
        assert!(DiscreteLagMeasure::new([(1, 0.5), (0, 0.5)]).is_err());
        assert!(DiscreteLagMeasure::new([(1, 0.5), (1, 0.5)]).is_err());
        assert!(DiscreteLagMeasure::new([(0, -0.5), (1, 1.5)]).is_err());
        assert!(DiscreteLagMeasure::new(Vec::<(usize, f64)>::new()).is_err());
        let m = DiscreteLagMeasure::new([(0, 0.5), (3, 0.5)]).unwrap();
        assert!(m.check_support(2).is_err());
        assert!(m.check_support(3).is_ok());
        let u = DiscreteLagMeasure::uniform(&[0, 1, 2]).unwrap();
        let mass: f64 = u.atoms().iter().map(|a| a.weight).sum();
        assert!((mass - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn measure_serde_round_trip() {
        let m = DiscreteLagMeasure::new([(0, 0.25), (2, 0.75)]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, "[[0,0.25],[2,0.75]]");
        let back: DiscreteLagMeasure = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<DiscreteLagMeasure>("[[0,0.5],[1,0.4]]").is_err());
    }
}
