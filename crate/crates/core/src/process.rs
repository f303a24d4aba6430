//! Storage for adapted processes on the scenario tree.
//!
//! Level `i` of a process holds one value per tree node at effective level
//! `clamp(i, 0, N)`: history levels (`i < 0`) carry a single deterministic
//! value, levels beyond the horizon carry `ℱ_T`-measurable leaf values.

use crate::error::{Error, Result};

/// A node of the scenario tree: its level and its index within the level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeRef {
    pub level: isize,
    pub index: usize,
}

impl NodeRef {
    pub const ROOT: NodeRef = NodeRef { level: 0, index: 0 };

    pub fn new(level: isize, index: usize) -> Self {
        Self { level, index }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedProcess {
    lo: isize,
    dim: usize,
    brownian_dim: usize,
    steps: usize,
    levels: Vec<Vec<f64>>,
}

impl AdaptedProcess {
    /// Zero process on levels `lo..=hi` with values in `ℝ^dim`.
    pub fn zeros(brownian_dim: usize, steps: usize, lo: isize, hi: isize, dim: usize) -> Self {
        assert!(hi >= lo, "empty level range {lo}..={hi}");
        let levels = (lo..=hi)
            .map(|l| vec![0.0; dim * node_count(brownian_dim, steps, l)])
            .collect();
        Self {
            lo,
            dim,
            brownian_dim,
            steps,
            levels,
        }
    }

    pub fn lo(&self) -> isize {
        self.lo
    }

    pub fn hi(&self) -> isize {
        self.lo + self.levels.len() as isize - 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn brownian_dim(&self) -> usize {
        self.brownian_dim
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn contains_level(&self, level: isize) -> bool {
        level >= self.lo && level <= self.hi()
    }

    pub fn node_count(&self, level: isize) -> usize {
        node_count(self.brownian_dim, self.steps, level)
    }

    fn slot(&self, level: isize) -> Result<usize> {
        if !self.contains_level(level) {
            return Err(Error::LevelOutOfRange {
                level,
                lo: self.lo,
                hi: self.hi(),
            });
        }
        Ok((level - self.lo) as usize)
    }

    /// All node values of a level, node-major.
    pub fn level(&self, level: isize) -> &[f64] {
        let s = self.slot(level).expect("level outside process range");
        &self.levels[s]
    }

    pub fn try_level(&self, level: isize) -> Result<&[f64]> {
        Ok(&self.levels[self.slot(level)?])
    }

    pub fn level_mut(&mut self, level: isize) -> &mut [f64] {
        let s = self.slot(level).expect("level outside process range");
        &mut self.levels[s]
    }

    pub fn set_level(&mut self, level: isize, values: Vec<f64>) -> Result<()> {
        let s = self.slot(level)?;
        if values.len() != self.levels[s].len() {
            return Err(Error::Dimension(format!(
                "level {level} expects {} values, got {}",
                self.levels[s].len(),
                values.len()
            )));
        }
        self.levels[s] = values;
        Ok(())
    }

    pub fn get(&self, level: isize, node: usize) -> &[f64] {
        let d = self.dim;
        &self.level(level)[node * d..(node + 1) * d]
    }

    pub fn get_mut(&mut self, level: isize, node: usize) -> &mut [f64] {
        let d = self.dim;
        &mut self.level_mut(level)[node * d..(node + 1) * d]
    }

    /// Value at `level` on the path through node `at` (an ancestor lookup;
    /// `at` must sit at an effective level no coarser than `level`).
    pub fn value_seen_from(&self, level: isize, at: NodeRef) -> &[f64] {
        let idx = ancestor_index(self.brownian_dim, self.steps, at, level);
        self.get(level, idx)
    }

    /// Broadcast of `level` onto every node of the (finer) level `to`.
    pub fn broadcast_level(&self, level: isize, to: isize) -> Vec<f64> {
        broadcast(self.level(level), self.dim, self.brownian_dim, self.steps, level, to)
    }

    pub fn max_abs(&self) -> f64 {
        self.levels
            .iter()
            .flatten()
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &AdaptedProcess) -> f64 {
        assert_eq!(self.lo, other.lo);
        assert_eq!(self.levels.len(), other.levels.len());
        self.levels
            .iter()
            .flatten()
            .zip(other.levels.iter().flatten())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Nodewise `self + a·other` on the common level range.
    pub fn axpy(&mut self, a: f64, other: &AdaptedProcess) {
        assert_eq!(self.dim, other.dim);
        for level in self.lo.max(other.lo)..=self.hi().min(other.hi()) {
            let src = other.level(level).to_vec();
            for (x, y) in self.level_mut(level).iter_mut().zip(src) {
                *x += a * y;
            }
        }
    }
}

/// Effective tree level of a grid index: histories collapse onto the root,
/// the terminal extension onto the leaves.
pub fn effective_level(steps: usize, level: isize) -> usize {
    level.clamp(0, steps as isize) as usize
}

pub fn node_count(brownian_dim: usize, steps: usize, level: isize) -> usize {
    1usize << (brownian_dim * effective_level(steps, level))
}

pub(crate) fn ancestor_index(brownian_dim: usize, steps: usize, at: NodeRef, level: isize) -> usize {
    let from = effective_level(steps, at.level);
    let to = effective_level(steps, level);
    debug_assert!(from >= to, "node at level {} cannot see level {level}", at.level);
    at.index >> (brownian_dim * (from - to))
}

/// Repeat each node value of `level` over its descendants at `to`.
pub fn broadcast(
    values: &[f64],
    dim: usize,
    brownian_dim: usize,
    steps: usize,
    level: isize,
    to: isize,
) -> Vec<f64> {
    let from = effective_level(steps, level);
    let target = effective_level(steps, to);
    assert!(target >= from, "cannot broadcast level {level} onto coarser level {to}");
    let shift = brownian_dim * (target - from);
    let count = node_count(brownian_dim, steps, to);
    let mut out = Vec::with_capacity(count * dim);
    for k in 0..count {
        let src = k >> shift;
        out.extend_from_slice(&values[src * dim..(src + 1) * dim]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_counts_follow_effective_levels() {
        assert_eq!(node_count(1, 3, -2), 1);
        assert_eq!(node_count(1, 3, 0), 1);
        assert_eq!(node_count(1, 3, 2), 4);
        assert_eq!(node_count(1, 3, 5), 8);
        assert_eq!(node_count(2, 3, 2), 16);
    }

    #[test]
    fn ancestor_lookup() {
        let mut p = AdaptedProcess::zeros(1, 3, -1, 4, 1);
        p.level_mut(-1)[0] = -1.0;
        p.level_mut(1).copy_from_slice(&[10.0, 11.0]);
        assert_eq!(p.value_seen_from(1, NodeRef::new(3, 5))[0], 11.0);
        assert_eq!(p.value_seen_from(1, NodeRef::new(3, 2))[0], 10.0);
        assert_eq!(p.value_seen_from(-1, NodeRef::new(3, 7))[0], -1.0);
        // level 4 is stored on the leaves of level 3
        assert_eq!(p.node_count(4), 8);
        assert_eq!(p.broadcast_level(1, 2), vec![10.0, 10.0, 11.0, 11.0]);
    }

    #[test]
    fn out_of_range_levels_are_reported() {
        let p = AdaptedProcess::zeros(1, 3, 0, 3, 1);
        assert!(matches!(p.try_level(4), Err(Error::LevelOutOfRange { .. })));
        let mut p = p;
        assert!(p.set_level(1, vec![0.0; 3]).is_err());
    }
}
