//! Non-recombining `2^d`-ary Brownian tree with `±√dt` increments.
//!
//! Node `k` at level `i+1` is child `k & (2^d − 1)` of node `k >> d` at level
//! `i`; bit `c` of the child index selects `+√dt` in Brownian component `c`.
//! All branches have probability `2^{−d}`, so conditional expectations,
//! Itô sums and (for `d = 1`) martingale representation are exact.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::process::{effective_level, node_count, AdaptedProcess};

pub const DEFAULT_BUDGET_BITS: usize = 24;
pub const MAX_BROWNIAN_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioTree {
    grid: TimeGrid,
    brownian_dim: usize,
    sqrt_dt: f64,
}

/// `Y = E[Y] + Σ_j Z_j·ΔW_j`, with `Z` stored on levels `0..level−1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleRepresentation {
    pub mean: Vec<f64>,
    pub integrand: AdaptedProcess,
}

impl ScenarioTree {
    pub fn new(grid: TimeGrid, brownian_dim: usize, budget_bits: usize) -> Result<Self> {
        if brownian_dim == 0 || brownian_dim > MAX_BROWNIAN_DIM {
            return Err(Error::Tree(format!(
                "Brownian dimension {brownian_dim} unsupported (1..={MAX_BROWNIAN_DIM})"
            )));
        }
        let bits = brownian_dim * grid.steps();
        if bits > budget_bits {
            return Err(Error::Tree(format!(
                "d·N = {bits} exceeds the node budget of {budget_bits} bits"
            )));
        }
        Ok(Self {
            grid,
            brownian_dim,
            sqrt_dt: grid.dt().sqrt(),
        })
    }

    pub fn with_default_budget(grid: TimeGrid, brownian_dim: usize) -> Result<Self> {
        Self::new(grid, brownian_dim, DEFAULT_BUDGET_BITS)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn brownian_dim(&self) -> usize {
        self.brownian_dim
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    pub fn dt(&self) -> f64 {
        self.grid.dt()
    }

    pub fn sqrt_dt(&self) -> f64 {
        self.sqrt_dt
    }

    pub fn branching(&self) -> usize {
        1 << self.brownian_dim
    }

    pub fn node_count(&self, level: isize) -> usize {
        node_count(self.brownian_dim, self.steps(), level)
    }

    pub fn parent(&self, node: usize) -> usize {
        node >> self.brownian_dim
    }

    pub fn children(&self, node: usize) -> std::ops::Range<usize> {
        let first = node << self.brownian_dim;
        first..first + self.branching()
    }

    /// Component `c` of the Brownian increment leading into `child`.
    pub fn increment(&self, child: usize, c: usize) -> f64 {
        if (child >> c) & 1 == 1 {
            self.sqrt_dt
        } else {
            -self.sqrt_dt
        }
    }

    pub fn zeros(&self, lo: isize, hi: isize, dim: usize) -> AdaptedProcess {
        AdaptedProcess::zeros(self.brownian_dim, self.steps(), lo, hi, dim)
    }

    fn eff(&self, level: isize) -> usize {
        effective_level(self.steps(), level)
    }

    /// One-level conditional expectation: average over the `2^d` children in
    /// ascending order.
    pub fn average_children(&self, values: &[f64], dim: usize) -> Vec<f64> {
        let b = self.branching();
        let parents = values.len() / (dim * b);
        let inv = 1.0 / b as f64;
        let mut out = vec![0.0; parents * dim];
        for p in 0..parents {
            let out_p = &mut out[p * dim..(p + 1) * dim];
            for child in p * b..(p + 1) * b {
                for (o, v) in out_p.iter_mut().zip(&values[child * dim..(child + 1) * dim]) {
                    *o += v;
                }
            }
            for o in out_p.iter_mut() {
                *o *= inv;
            }
        }
        out
    }

    /// `E[· | ℱ_{t_to}]` of a random variable measurable at level `from`.
    pub fn cond_expect(&self, values: &[f64], dim: usize, from: isize, to: isize) -> Result<Vec<f64>> {
        if to > from {
            return Err(Error::Precondition(format!(
                "conditional expectation onto level {to} of a level-{from} variable"
            )));
        }
        let expected = self.node_count(from) * dim;
        if values.len() != expected {
            return Err(Error::Dimension(format!(
                "level {from} expects {expected} values, got {}",
                values.len()
            )));
        }
        let mut cur = values.to_vec();
        for _ in self.eff(to)..self.eff(from) {
            cur = self.average_children(&cur, dim);
        }
        Ok(cur)
    }

    /// Unconditional expectation of a level-`level` variable.
    pub fn expectation(&self, values: &[f64], dim: usize, level: isize) -> Vec<f64> {
        self.cond_expect(values, dim, level, 0)
            .expect("expectation onto the root is always admissible")
    }

    /// `W(t_i)` at every node of level `i`, `d` components per node.
    pub fn brownian(&self, level: usize) -> Vec<f64> {
        let d = self.brownian_dim;
        let mut cur = vec![0.0; d];
        for _ in 0..level.min(self.steps()) {
            let nodes = cur.len() / d;
            let mut next = vec![0.0; nodes * self.branching() * d];
            for p in 0..nodes {
                for child in self.children(p) {
                    for c in 0..d {
                        next[child * d + c] = cur[p * d + c] + self.increment(child, c);
                    }
                }
            }
            cur = next;
        }
        cur
    }

    /// Discrete Itô integral `Σ_{j=a}^{i−1} σ(t_j)·ΔW_j` for `i = a..=b`.
    ///
    /// `integrand` holds `n×d` row-major matrices; the result has dimension
    /// `n` and is zero at level `a`.
    pub fn ito_integrate(&self, integrand: &AdaptedProcess, a: usize, b: usize) -> Result<AdaptedProcess> {
        if a > b {
            return Err(Error::Precondition(format!("Itô sum from level {a} to {b}")));
        }
        let d = self.brownian_dim;
        if !integrand.dim().is_multiple_of(d) {
            return Err(Error::Dimension(format!(
                "integrand dimension {} is not a multiple of d = {d}",
                integrand.dim()
            )));
        }
        let n = integrand.dim() / d;
        let mut out = self.zeros(a as isize, b as isize, n);
        for j in a..b {
            let sigma = integrand.try_level(j as isize)?.to_vec();
            let prev = out.level(j as isize).to_vec();
            let next = out.level_mut(j as isize + 1);
            for p in 0..self.node_count(j as isize) {
                for child in self.children(p) {
                    for r in 0..n {
                        let mut acc = prev[p * n + r];
                        for c in 0..d {
                            acc += sigma[p * n * d + r * d + c] * self.increment(child, c);
                        }
                        next[child * n + r] = acc;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Per-component martingale differencing of a level-`j+1` variable:
    /// `Z_c = (mean over children with +√dt in c − mean over −√dt)/(2√dt)`,
    /// laid out as `dim×d` row-major per level-`j` node.
    pub fn difference(&self, next: &[f64], dim: usize) -> Vec<f64> {
        let d = self.brownian_dim;
        let b = self.branching();
        let parents = next.len() / (dim * b);
        let half = (b / 2) as f64;
        let scale = 1.0 / (2.0 * self.sqrt_dt * half);
        let mut out = vec![0.0; parents * dim * d];
        for p in 0..parents {
            for r in 0..dim {
                for c in 0..d {
                    let mut up = 0.0;
                    let mut down = 0.0;
                    for child in p * b..(p + 1) * b {
                        let v = next[child * dim + r];
                        if (child >> c) & 1 == 1 {
                            up += v;
                        } else {
                            down += v;
                        }
                    }
                    out[p * dim * d + r * d + c] = (up - down) * scale;
                }
            }
        }
        out
    }

    /// Representation of a level-`level` variable as its mean plus an Itô sum.
    ///
    /// Exact for `d = 1`. For `d = 2` the `±√dt` tree carries a third
    /// mean-zero direction (`ΔW₁ΔW₂`), and `integrand` is the orthogonal
    /// projection onto the Itô sums.
    pub fn martingale_represent(&self, values: &[f64], dim: usize, level: isize) -> Result<MartingaleRepresentation> {
        let top = self.eff(level);
        let expected = self.node_count(level) * dim;
        if values.len() != expected {
            return Err(Error::Dimension(format!(
                "level {level} expects {expected} values, got {}",
                values.len()
            )));
        }
        let d = self.brownian_dim;
        let hi = top as isize - 1;
        let mut integrand = self.zeros(0, hi.max(0), dim * d);
        let mut cur = values.to_vec();
        for j in (0..top).rev() {
            integrand.set_level(j as isize, self.difference(&cur, dim))?;
            cur = self.average_children(&cur, dim);
        }
        Ok(MartingaleRepresentation {
            mean: cur,
            integrand,
        })
    }

    /// `E[Y] + Σ_{j<level} Z_j·ΔW_j` at every node of `level`.
    pub fn reconstruct(&self, mean: &[f64], integrand: &AdaptedProcess, level: isize) -> Result<Vec<f64>> {
        let top = self.eff(level);
        let d = self.brownian_dim;
        let dim = mean.len();
        if top == 0 {
            return Ok(mean.to_vec());
        }
        if integrand.lo() > 0 || integrand.hi() < top as isize - 1 {
            return Err(Error::Precondition(format!(
                "integrand covers levels {}..={}, reconstruction at level {level} needs 0..={}",
                integrand.lo(),
                integrand.hi(),
                top - 1
            )));
        }
        let mut cur = mean.to_vec();
        for j in 0..top {
            let z = integrand.level(j as isize);
            let nodes = self.node_count(j as isize);
            let mut next = vec![0.0; nodes * self.branching() * dim];
            for p in 0..nodes {
                for child in self.children(p) {
                    for r in 0..dim {
                        let mut acc = cur[p * dim + r];
                        for c in 0..d {
                            acc += z[p * dim * d + r * d + c] * self.increment(child, c);
                        }
                        next[child * dim + r] = acc;
                    }
                }
            }
            cur = next;
        }
        Ok(cur)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(n: usize, d: usize) -> ScenarioTree {
        ScenarioTree::with_default_budget(TimeGrid::new(1.0, n, 0).unwrap(), d).unwrap()
    }

    #[test]
    fn increments_have_exact_moments() {
        for d in 1..=2 {
            let t = tree(4, d);
            let b = t.branching();
            for c in 0..d {
                let mean: f64 = (0..b).map(|k| t.increment(k, c)).sum::<f64>() / b as f64;
                assert_eq!(mean, 0.0);
                for c2 in 0..d {
                    let cov: f64 = (0..b)
                        .map(|k| t.increment(k, c) * t.increment(k, c2))
                        .sum::<f64>()
                        / b as f64;
                    let expected = if c == c2 { t.dt() } else { 0.0 };
                    assert!((cov - expected).abs() < 1e-16);
                }
            }
        }
    }

    #[test]
    fn node_count_and_budget() {
        let t = tree(5, 2);
        assert_eq!(t.node_count(3), 64);
        let g = TimeGrid::new(1.0, 13, 0).unwrap();
        assert!(ScenarioTree::with_default_budget(g, 2).is_err());
        assert!(ScenarioTree::with_default_budget(g, 1).is_ok());
        assert!(ScenarioTree::new(g, 1, 12).is_err());
        assert!(ScenarioTree::with_default_budget(g, 3).is_err());
    }

    #[test]
    fn cond_expect_examples() {
        let t = tree(2, 1);
        assert_eq!(t.cond_expect(&[2.0, 4.0], 1, 1, 0).unwrap(), vec![3.0]);
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(t.cond_expect(&x, 1, 2, 2).unwrap(), x.to_vec());
        let e1 = t.cond_expect(&x, 1, 2, 1).unwrap();
        assert_eq!(e1, vec![1.5, 3.5]);
        assert_eq!(t.cond_expect(&e1, 1, 1, 0).unwrap(), vec![2.5]);
        assert_eq!(t.cond_expect(&x, 1, 2, 0).unwrap(), vec![2.5]);
        assert!(t.cond_expect(&x, 1, 1, 2).is_err());
    }

    #[test]
    fn ito_integral_examples() {
        let t = tree(3, 1);
        let mut ones = t.zeros(0, 2, 1);
        for l in 0..=2 {
            ones.level_mut(l).fill(1.0);
        }
        let w = t.ito_integrate(&ones, 0, 3).unwrap();
        for l in 0..=3 {
            let bm = t.brownian(l as usize);
            for (a, b) in w.level(l).iter().zip(&bm) {
                assert!((a - b).abs() < 1e-15);
            }
        }
        let zero = t.zeros(0, 2, 1);
        assert_eq!(t.ito_integrate(&zero, 0, 3).unwrap().max_abs(), 0.0);
        assert!(t.ito_integrate(&zero, 2, 1).is_err());

        // Σ_{j<2} W(t_j)ΔW_j over the 4 paths of a 2-step tree, dt = 1/3.
        let mut wproc = t.zeros(0, 1, 1);
        wproc.set_level(1, t.brownian(1)).unwrap();
        let s = t.ito_integrate(&wproc, 0, 2).unwrap();
        let h = t.sqrt_dt();
        // paths (−,−), (−,+), (+,−), (+,+): W(t_1)·ΔW_1
        let expected = [h * h, -h * h, -h * h, h * h];
        for (a, b) in s.level(2).iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(t.expectation(s.level(2), 1, 2)[0].abs() < 1e-16);
    }

    #[test]
    fn martingale_representation_examples() {
        let t = tree(2, 1);
        // Y = W(t_1)
        let rep = t.martingale_represent(&t.brownian(1), 1, 1).unwrap();
        assert_eq!(rep.mean, vec![0.0]);
        assert!((rep.integrand.level(0)[0] - 1.0).abs() < 1e-15);
        // constant
        let rep = t.martingale_represent(&[3.5; 4], 1, 2).unwrap();
        assert_eq!(rep.mean, vec![3.5]);
        assert_eq!(rep.integrand.max_abs(), 0.0);
        // Y = W(t_2)^2: E = 2dt, Z_0 = 0, Z_1 = 2 W(t_1)
        let w2: Vec<f64> = t.brownian(2).iter().map(|w| w * w).collect();
        let rep = t.martingale_represent(&w2, 1, 2).unwrap();
        assert!((rep.mean[0] - 2.0 * t.dt()).abs() < 1e-15);
        assert!(rep.integrand.level(0)[0].abs() < 1e-15);
        let w1 = t.brownian(1);
        for (z, w) in rep.integrand.level(1).iter().zip(&w1) {
            assert!((z - 2.0 * w).abs() < 1e-14);
        }
        let back = t.reconstruct(&rep.mean, &rep.integrand, 2).unwrap();
        for (a, b) in back.iter().zip(&w2) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn two_dimensional_representation_is_a_projection() {
        let t = tree(2, 2);
        // W_1 W_2 at level 1 is orthogonal to both increments.
        let bm = t.brownian(1);
        let prod: Vec<f64> = bm.chunks(2).map(|w| w[0] * w[1]).collect();
        let rep = t.martingale_represent(&prod, 1, 1).unwrap();
        assert_eq!(rep.integrand.max_abs(), 0.0);
        // W_2 alone is represented exactly.
        let w2: Vec<f64> = bm.chunks(2).map(|w| w[1]).collect();
        let rep = t.martingale_represent(&w2, 1, 1).unwrap();
        let z = rep.integrand.level(0);
        assert!(z[0].abs() < 1e-15 && (z[1] - 1.0).abs() < 1e-15);
        let back = t.reconstruct(&rep.mean, &rep.integrand, 1).unwrap();
        assert!(back.iter().zip(&w2).all(|(a, b)| (a - b).abs() < 1e-15));
    }
}
