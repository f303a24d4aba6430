use crate::backward::{Generator, GeneratorMeasures, TerminalData};
use crate::error::Result;
use crate::grid::{GridPoint, PathSegment};
use crate::linalg::{matvec_t_acc, norm_sq};
use crate::process::{AdaptedProcess, NodeRef};
use crate::tree::ScenarioTree;

use super::linearize::{Linearization, StateKernels};

/// The linear adjoint generator
///
/// `J(t, Y_t) = Σ_r Ḡ'(t+r, r) Y(t+r) λ₀(dr)`,
/// `F(t, s, ·) = Σ_r B̄'(t+r, r) Y(s+r) λ₁(dr) + Σ_r Σ_c Σ̄_c'(t+r, r) Z_c(s+r, t+r) λ₂(dr)`.
///
/// Kernels are read as zero at times `≥ T`, so the adjoint carries no
/// source beyond the horizon.
#[derive(Debug, Clone)]
pub struct AdjointGenerator<'a> {
    kernels: &'a StateKernels,
    measures: GeneratorMeasures,
    kappa: f64,
    lipschitz: f64,
    has_neutral: bool,
    has_driver: bool,
}

/// `sup_t |K(t, r)|²_F` for every atom, over levels `0..N−1`.
fn atom_sups(p: &AdaptedProcess, blocks: usize, size: usize, last: isize) -> Vec<f64> {
    let mut out = vec![0.0_f64; blocks];
    for level in p.lo()..=p.hi().min(last) {
        for chunk in p.level(level).chunks(blocks * size) {
            for (k, o) in out.iter_mut().enumerate() {
                *o = o.max(norm_sq(&chunk[k * size..(k + 1) * size]));
            }
        }
    }
    out
}

impl<'a> AdjointGenerator<'a> {
    pub fn new(lin: &'a Linearization) -> Self {
        let k = &lin.kernels;
        let n = k.state_dim;
        let d = k.noise_dim;
        let last = k.grid.steps() as isize - 1;
        let m = &k.measures;
        let worst = |v: &[f64]| v.iter().fold(0.0_f64, |a, b| a.max(*b));
        let g = worst(&atom_sups(&k.g, m.g.len(), n * n, last));
        let b = worst(&atom_sups(&k.b, m.b.len(), n * n, last));
        let per_component = atom_sups(&k.sigma, d * m.sigma.len(), n * n, last);
        let s: Vec<f64> = (0..m.sigma.len())
            .map(|a| (0..d).map(|c| per_component[c * m.sigma.len() + a]).sum())
            .collect();
        let s = worst(&s);
        Self {
            kernels: k,
            measures: GeneratorMeasures {
                neutral: m.g.clone(),
                forward: m.b.clone(),
                diagonal: m.sigma.clone(),
            },
            kappa: g,
            lipschitz: 2.0 * b.max(s),
            has_neutral: g > 0.0,
            has_driver: b > 0.0 || s > 0.0,
        }
    }
}

impl Generator for AdjointGenerator<'_> {
    fn dim(&self) -> usize {
        self.kernels.state_dim
    }

    fn noise_dim(&self) -> usize {
        self.kernels.noise_dim
    }

    fn kappa(&self) -> f64 {
        self.kappa
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn measures(&self) -> &GeneratorMeasures {
        &self.measures
    }

    fn neutral(&self, t: GridPoint, at: NodeRef, y: &PathSegment, out: &mut [f64]) {
        out.fill(0.0);
        let n = self.kernels.state_dim;
        let horizon = self.kernels.grid.steps() as isize;
        for (k, a) in self.measures.neutral.atoms().iter().enumerate() {
            let level = t.index + a.lag as isize;
            if level >= horizon {
                continue;
            }
            if let Some(g) = self.kernels.g_at(level, at, k) {
                matvec_t_acc(out, g, n, n, y.lag(a.lag), a.weight);
            }
        }
    }

    fn driver(
        &self,
        t: GridPoint,
        _s: GridPoint,
        at: NodeRef,
        y: &PathSegment,
        _z: &[f64],
        diag: &PathSegment,
        out: &mut [f64],
    ) {
        out.fill(0.0);
        let n = self.kernels.state_dim;
        let d = self.kernels.noise_dim;
        for (k, a) in self.measures.forward.atoms().iter().enumerate() {
            if let Some(b) = self.kernels.b_at(t.index + a.lag as isize, at, k) {
                matvec_t_acc(out, b, n, n, y.lag(a.lag), a.weight);
            }
        }
        let mut col = vec![0.0; n];
        for (k, a) in self.measures.diagonal.atoms().iter().enumerate() {
            let zd = diag.lag(a.lag);
            for c in 0..d {
                if let Some(s) = self.kernels.sigma_at(t.index + a.lag as isize, at, c, k) {
                    for r in 0..n {
                        col[r] = zd[r * d + c];
                    }
                    matvec_t_acc(out, s, n, n, &col, a.weight);
                }
            }
        }
    }

    fn has_neutral(&self) -> bool {
        self.has_neutral
    }

    fn has_driver(&self) -> bool {
        self.has_driver
    }
}

/// `Ψ(t_i) = Σ_r L̄(t_i+r, r)' λ₃(dr)` on the leaves, `ξ ≡ 0`.
pub fn adjoint_terminal(lin: &Linearization, tree: &ScenarioTree) -> Result<TerminalData> {
    let k = &lin.kernels;
    let n = k.state_dim;
    let steps = tree.steps() as isize;
    let mut term = TerminalData::zeros(tree, n);
    for (i, psi) in term.psi.iter_mut().enumerate() {
        for (leaf, out) in psi.chunks_mut(n).enumerate() {
            let at = NodeRef::new(steps, leaf);
            for (a, atom) in k.measures.cost.atoms().iter().enumerate() {
                if let Some(l) = k.cost_at(i as isize + atom.lag as isize, at, a) {
                    for (o, v) in out.iter_mut().zip(l) {
                        *o += atom.weight * v;
                    }
                }
            }
        }
    }
    Ok(term)
}

/// Generator and terminal data of the linear adjoint.
pub fn assemble_adjoint<'a>(lin: &'a Linearization, tree: &ScenarioTree) -> Result<(AdjointGenerator<'a>, TerminalData)> {
    Ok((AdjointGenerator::new(lin), adjoint_terminal(lin, tree)?))
}
