//! Named problems used by the checks and the command line.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::composition::{Composition, CompositionSpec, CostSpec, Nonlinearity, PathMap, TimeMatrix};
use crate::error::{Error, Result};
use crate::forward::{ControlBox, NsfdeProblem};
use crate::grid::{DiscreteLagMeasure, TimeGrid};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PresetName {
    /// `dX = u dt + dW`, `l = X² + u²`, no delay.
    Lq,
    /// Affine drift and diffusion reading `X(t)` and `X(t − δ)`, `g ≡ 0`.
    DelayLinear,
    /// `g = κ(X(t) + X(t − δ))/2`, `b = u`, `σ = 1 + 0.2u`.
    NeutralLinear,
    /// `g = 0.5·tanh((X(t) + X(t − δ))/2)`, started from the path `φ ≡ 1`.
    NeutralTanh,
    /// `b = sin X + u`.
    SinDrift,
    /// Two states, two controls, bounded random time-varying kernels.
    RandomLinear,
}

impl PresetName {
    pub const ALL: [PresetName; 6] = [
        PresetName::Lq,
        PresetName::DelayLinear,
        PresetName::NeutralLinear,
        PresetName::NeutralTanh,
        PresetName::SinDrift,
        PresetName::RandomLinear,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::Lq => "lq",
            PresetName::DelayLinear => "delay-linear",
            PresetName::NeutralLinear => "neutral-linear",
            PresetName::NeutralTanh => "neutral-tanh",
            PresetName::SinDrift => "sin-drift",
            PresetName::RandomLinear => "random-linear",
        }
    }

    /// State enters every coefficient affinely and the cost quadratically.
    pub fn is_state_affine(self) -> bool {
        matches!(
            self,
            PresetName::Lq | PresetName::DelayLinear | PresetName::NeutralLinear | PresetName::RandomLinear
        )
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PresetName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Precondition(format!("unknown preset `{s}`")))
    }
}

/// Knobs shared by the presets; each preset reads only what it needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PresetOptions {
    /// Strength of `g` for `neutral-linear`.
    pub kappa: f64,
    /// Seed for `random-linear`.
    pub seed: u64,
}

impl Default for PresetOptions {
    fn default() -> Self {
        Self { kappa: 0.5, seed: 1 }
    }
}

fn present_and_delayed(grid: &TimeGrid) -> DiscreteLagMeasure {
    match grid.delay_steps() {
        0 => DiscreteLagMeasure::dirac(0),
        l => DiscreteLagMeasure::uniform(&[0, l]).expect("two distinct lags"),
    }
}

/// Matrices for [`present_and_delayed`]: one per atom, so the
/// undelayed grid collapses `a·X(t)/2 + c·X(t)/2` into one Dirac atom.
fn split(grid: &TimeGrid, now: f64, delayed: f64) -> Vec<Matrix> {
    match grid.delay_steps() {
        0 => vec![Matrix::scalar(0.5 * (now + delayed))],
        _ => vec![Matrix::scalar(now), Matrix::scalar(delayed)],
    }
}

fn scalar_quadratic() -> CostSpec {
    CostSpec::quadratic(Matrix::scalar(1.0), Matrix::scalar(1.0))
}

fn scalar_spec(neutral: Option<PathMap>, drift: PathMap, diffusion: PathMap, diffusion_control: f64) -> CompositionSpec {
    CompositionSpec {
        state_dim: 1,
        control_dim: 1,
        noise_dim: 1,
        neutral,
        drift,
        drift_control: Matrix::scalar(1.0),
        diffusion: vec![diffusion],
        diffusion_control: vec![Matrix::scalar(diffusion_control)],
        cost: scalar_quadratic(),
    }
}

/// The composition data behind a preset.
pub fn preset_spec(name: PresetName, grid: &TimeGrid, opts: &PresetOptions) -> Result<CompositionSpec> {
    let zero_drift = || PathMap::constant(1, vec![0.0]);
    let unit_noise = || PathMap::constant(1, vec![1.0]);
    Ok(match name {
        PresetName::Lq => scalar_spec(None, zero_drift(), unit_noise(), 0.0),
        PresetName::DelayLinear => {
            let m = present_and_delayed(grid);
            let drift = PathMap::linear(m.clone(), split(grid, -1.0, 0.8));
            let diffusion = PathMap::linear(m, split(grid, 0.0, 0.4)).with_offset(vec![0.3]);
            scalar_spec(None, drift, diffusion, 0.1)
        }
        PresetName::NeutralLinear => {
            if !opts.kappa.is_finite() {
                return Err(Error::NotContractive(opts.kappa));
            }
            let g = PathMap::linear(present_and_delayed(grid), split(grid, opts.kappa, opts.kappa));
            scalar_spec(Some(g), zero_drift(), unit_noise(), 0.2)
        }
        PresetName::NeutralTanh => {
            let g = PathMap::linear(present_and_delayed(grid), split(grid, 1.0, 1.0))
                .with_scale(0.5, Nonlinearity::Tanh);
            scalar_spec(Some(g), zero_drift(), unit_noise(), 0.0)
        }
        PresetName::SinDrift => {
            let drift = PathMap::linear(DiscreteLagMeasure::dirac(0), vec![Matrix::scalar(1.0)])
                .with_scale(1.0, Nonlinearity::Sin);
            scalar_spec(None, drift, unit_noise(), 0.0)
        }
        PresetName::RandomLinear => random_linear_spec(grid, opts.seed),
    })
}

fn initial_path(name: PresetName, grid: &TimeGrid, opts: &PresetOptions) -> Vec<Vec<f64>> {
    let len = grid.delay_steps() + 1;
    match name {
        PresetName::RandomLinear => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x005e_ed0f_1a7e);
            (0..len).map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
        }
        PresetName::DelayLinear => (0..len)
            .map(|k| vec![0.5 + 0.5 * k as f64 / len.max(1) as f64])
            .collect(),
        _ => vec![vec![1.0]; len],
    }
}

fn default_box(name: PresetName) -> ControlBox {
    match name {
        PresetName::RandomLinear => ControlBox::symmetric(2, 10.0),
        _ => ControlBox::symmetric(1, 10.0),
    }
}

/// A ready-to-solve problem with the preset's initial path and control box.
pub fn build_preset(name: PresetName, grid: TimeGrid, opts: &PresetOptions) -> Result<NsfdeProblem> {
    let spec = preset_spec(name, &grid, opts)?;
    let coef = Composition::new(spec)?;
    NsfdeProblem::new(grid, Arc::new(coef), initial_path(name, &grid, opts), default_box(name))
}

/// A problem from inline composition data.
pub fn composition_problem(
    spec: CompositionSpec,
    grid: TimeGrid,
    initial: Vec<Vec<f64>>,
    control_box: ControlBox,
) -> Result<NsfdeProblem> {
    NsfdeProblem::new(grid, Arc::new(Composition::new(spec)?), initial, control_box)
}

fn random_measure(rng: &mut ChaCha8Rng, delay: usize) -> DiscreteLagMeasure {
    let raw: Vec<f64> = (0..=delay).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let head: f64 = w[..delay].iter().sum();
    w[delay] = 1.0 - head;
    DiscreteLagMeasure::new(w.into_iter().enumerate()).expect("positive weights summing to one")
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, half: f64) -> Matrix {
    Matrix((0..rows).map(|_| (0..cols).map(|_| rng.gen_range(-half..half)).collect()).collect())
}

fn random_table(rng: &mut ChaCha8Rng, steps: usize, n: usize, half: f64) -> TimeMatrix {
    TimeMatrix::Table((0..=steps).map(|_| random_matrix(rng, n, n, half)).collect())
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, half: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-half..half)).collect()
}

fn random_map(rng: &mut ChaCha8Rng, grid: &TimeGrid, half: f64) -> PathMap {
    let measure = random_measure(rng, grid.delay_steps());
    let matrices = (0..measure.len()).map(|_| random_table(rng, grid.steps(), 2, half)).collect();
    PathMap::new(measure, matrices).with_offset(random_vec(rng, 2, 0.5))
}

/// `M·M' + εI` with entries of `M` bounded, so the weight is positive definite.
fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let m = random_matrix(rng, n, n, 1.0);
    Matrix(
        (0..n)
            .map(|r| {
                (0..n)
                    .map(|c| (0..n).map(|k| m.0[r][k] * m.0[c][k]).sum::<f64>() + if r == c { 0.5 } else { 0.0 })
                    .collect()
            })
            .collect(),
    )
}

/// Random bounded affine data with `n = m = 2`, `d = 1`. `g` has
/// `κ ≤ 0.3` and vanishes on undelayed grids.
pub fn random_linear_spec(grid: &TimeGrid, seed: u64) -> CompositionSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = grid.steps();
    let neutral = (grid.delay_steps() > 0).then(|| {
        let measure = random_measure(&mut rng, grid.delay_steps());
        let matrices = (0..measure.len()).map(|_| random_table(&mut rng, steps, 2, 0.15)).collect();
        PathMap::new(measure, matrices).with_offset(random_vec(&mut rng, 2, 0.2))
    });
    let drift = random_map(&mut rng, grid, 0.8);
    let drift_control = random_matrix(&mut rng, 2, 2, 1.0);
    let diffusion = vec![random_map(&mut rng, grid, 0.4)];
    let diffusion_control = vec![random_matrix(&mut rng, 2, 2, 0.3)];
    let cost_measure = random_measure(&mut rng, grid.delay_steps());
    let cost_matrices = (0..cost_measure.len()).map(|_| random_table(&mut rng, steps, 2, 1.0)).collect();
    let cost = CostSpec {
        measure: cost_measure,
        matrices: cost_matrices,
        offset: Some(random_vec(&mut rng, 2, 0.5)),
        state_weight: random_spd(&mut rng, 2),
        state_linear: Some(random_vec(&mut rng, 2, 1.0)),
        control_weight: random_spd(&mut rng, 2),
        control_target: Some(random_vec(&mut rng, 2, 0.5)),
    };
    CompositionSpec {
        state_dim: 2,
        control_dim: 2,
        noise_dim: 1,
        neutral,
        drift,
        drift_control,
        diffusion,
        diffusion_control,
        cost,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_builds_on_delayed_and_undelayed_grids() {
        for l in [0, 2] {
            let grid = TimeGrid::new(1.0, 6, l).unwrap();
            for name in PresetName::ALL {
                let p = build_preset(name, grid, &PresetOptions::default()).unwrap();
                assert_eq!(p.initial.len(), l + 1, "{name}");
            }
        }
    }

    #[test]
    fn kappa_is_checked() {
        let grid = TimeGrid::new(1.0, 4, 1).unwrap();
        let opts = PresetOptions { kappa: 1.0, seed: 1 };
        assert!(matches!(build_preset(PresetName::NeutralLinear, grid, &opts), Err(Error::NotContractive(_))));
        let p = build_preset(PresetName::NeutralLinear, grid, &PresetOptions { kappa: 0.9, seed: 1 }).unwrap();
        assert!((p.coefficients.kappa() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn random_linear_is_reproducible() {
        let grid = TimeGrid::new(1.0, 8, 2).unwrap();
        assert_eq!(random_linear_spec(&grid, 3), random_linear_spec(&grid, 3));
        assert_ne!(random_linear_spec(&grid, 3), random_linear_spec(&grid, 4));
        let undelayed = random_linear_spec(&TimeGrid::new(1.0, 8, 0).unwrap(), 3);
        assert!(undelayed.neutral.is_none());
    }

    #[test]
    fn names_round_trip() {
        for name in PresetName::ALL {
            assert_eq!(name.as_str().parse::<PresetName>().unwrap(), name);
            let json = serde_json::to_string(&name).unwrap();
            assert_eq!(serde_json::from_str::<PresetName>(&json).unwrap(), name);
        }
    }
}
