use crate::error::{Error, Result};
use crate::process::AdaptedProcess;
use crate::tree::ScenarioTree;
use crate::two_param::TwoParamProcess;

/// Backward induction of `ρ(s_j) = Φ + Σ_{k=j}^{N−1} h_k·dt − Σ_{k=j}^{N−1} z_k·ΔW_k`
/// for `j = i..=N`.
///
/// `phi` holds leaf values, `h[k−i]` the level-`k` values of the driver.
/// Returns `ρ` on levels `i..=N` and `z` on levels `i..N−1`, each indexed
/// from `i`.
pub fn bsde_path(
    tree: &ScenarioTree,
    i: usize,
    phi: &[f64],
    h: &[Vec<f64>],
    dim: usize,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let steps = tree.steps();
    if i > steps || h.len() != steps - i {
        return Err(Error::Dimension(format!(
            "row {i} needs {} driver levels, got {}",
            steps.saturating_sub(i),
            h.len()
        )));
    }
    if phi.len() != tree.node_count(steps as isize) * dim {
        return Err(Error::Dimension("terminal values must sit on the leaves".into()));
    }
    let dt = tree.dt();
    let mut rho = vec![phi.to_vec()];
    let mut z = Vec::with_capacity(steps - i);
    for j in (i..steps).rev() {
        let k = rho.last().expect("terminal level present");
        z.push(tree.difference(k, dim));
        let mut next = tree.average_children(k, dim);
        for (x, hv) in next.iter_mut().zip(&h[j - i]) {
            *x += hv * dt;
        }
        rho.push(next);
    }
    rho.reverse();
    z.reverse();
    Ok((rho, z))
}

/// One row of a backward Volterra equation,
/// `ỹ(t_i) = Φ + Σ_{j=i}^{N−1} h_j·dt − Σ_{j=i}^{N−1} z_j·ΔW_j`.
///
/// Returns `ỹ(t_i)` at level `i` and `z(t_i, s_j)` at level `j` for
/// `j = i..N−1`.
pub fn solve_bsvie_row(
    tree: &ScenarioTree,
    i: usize,
    phi: &[f64],
    h: &[Vec<f64>],
    dim: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let (mut rho, z) = bsde_path(tree, i, phi, h, dim)?;
    Ok((rho.swap_remove(0), z))
}

/// Solution of a family of backward Volterra rows `i = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct BsvieSolution {
    /// Levels `0..=N`.
    pub y: AdaptedProcess,
    /// Upper part `j ≥ i` only.
    pub z: TwoParamProcess,
}

/// Solves every row; `phi[i]` are leaf values, `h[i][j−i]` level-`j` values.
pub fn solve_bsvie(tree: &ScenarioTree, phi: &[Vec<f64>], h: &[Vec<Vec<f64>>], dim: usize) -> Result<BsvieSolution> {
    let steps = tree.steps();
    if phi.len() != steps + 1 || h.len() != steps + 1 {
        return Err(Error::Dimension(format!("expected {} rows", steps + 1)));
    }
    let d = tree.brownian_dim();
    let mut y = tree.zeros(0, steps as isize, dim);
    let mut z = TwoParamProcess::zeros(d, steps, 0, dim * d);
    for i in 0..=steps {
        let (yi, zi) = solve_bsvie_row(tree, i, &phi[i], &h[i], dim)?;
        y.set_level(i as isize, yi)?;
        for (off, zj) in zi.into_iter().enumerate() {
            z.row_mut(i).set_level((i + off) as isize, zj)?;
        }
    }
    Ok(BsvieSolution { y, z })
}

/// Largest pathwise gap in `ỹ(t_i) = Φ + Σ h·dt − Σ z·ΔW` over all leaves
/// and rows `i = 0..=N`; only the upper part of `z` is read.
pub fn bsvie_identity_error(
    tree: &ScenarioTree,
    phi: &[Vec<f64>],
    h: &[Vec<Vec<f64>>],
    y: &AdaptedProcess,
    z: &TwoParamProcess,
) -> f64 {
    let steps = tree.steps() as isize;
    let dim = y.dim();
    let d = tree.brownian_dim();
    let dt = tree.dt();
    let mut worst = 0.0_f64;
    for i in 0..=steps {
        for leaf in 0..tree.node_count(steps) {
            let at = crate::process::NodeRef::new(steps, leaf);
            let mut v: Vec<f64> = phi[i as usize][leaf * dim..(leaf + 1) * dim].to_vec();
            for j in i..steps {
                let hj = &h[i as usize][(j - i) as usize];
                let node = leaf >> (d * (steps - j) as usize);
                let child = leaf >> (d * (steps - j - 1) as usize);
                let zj = z.seen_from(i as usize, j as usize, at);
                for r in 0..dim {
                    v[r] += hj[node * dim + r] * dt;
                    for c in 0..d {
                        v[r] -= zj[r * d + c] * tree.increment(child, c);
                    }
                }
            }
            let yv = y.value_seen_from(i, at);
            for r in 0..dim {
                worst = worst.max((yv[r] - v[r]).abs());
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;

    fn tree(n: usize) -> ScenarioTree {
        ScenarioTree::with_default_budget(TimeGrid::new(1.0, n, 0).unwrap(), 1).unwrap()
    }

    fn zero_driver(tree: &ScenarioTree) -> Vec<Vec<Vec<f64>>> {
        let n = tree.steps();
        (0..=n)
            .map(|i| (i..n).map(|j| vec![0.0; tree.node_count(j as isize)]).collect())
            .collect()
    }

    #[test]
    fn deterministic_terminal_without_driver() {
        let t = tree(3);
        let phi: Vec<Vec<f64>> = (0..=3).map(|i| vec![i as f64; 8]).collect();
        let h = zero_driver(&t);
        let sol = solve_bsvie(&t, &phi, &h, 1).unwrap();
        for i in 0..=3 {
            assert!(sol.y.level(i).iter().all(|&v| v == i as f64));
        }
        assert_eq!(sol.z.max_abs_in(crate::two_param::Region::Upper), 0.0);
    }

    #[test]
    fn unit_driver_integrates_time() {
        let t = tree(4);
        let phi = vec![vec![0.0; 16]; 5];
        let h: Vec<Vec<Vec<f64>>> = (0..=4)
            .map(|i| (i..4).map(|j| vec![1.0; t.node_count(j as isize)]).collect())
            .collect();
        let sol = solve_bsvie(&t, &phi, &h, 1).unwrap();
        for i in 0..=4 {
            let expected = 1.0 - t.grid().time(i);
            assert!(sol.y.level(i).iter().all(|v| (v - expected).abs() < 1e-15));
        }
        assert_eq!(sol.z.max_abs_in(crate::two_param::Region::Upper), 0.0);
        assert!(bsvie_identity_error(&t, &phi, &h, &sol.y, &sol.z) < 1e-14);
    }

    #[test]
    fn brownian_terminal_gives_unit_integrand() {
        let t = tree(3);
        let wt = t.brownian(3);
        let phi = vec![wt; 4];
        let h = zero_driver(&t);
        let sol = solve_bsvie(&t, &phi, &h, 1).unwrap();
        for i in 0..=3usize {
            let w = t.brownian(i);
            for (a, b) in sol.y.level(i as isize).iter().zip(&w) {
                assert!((a - b).abs() < 1e-15);
            }
            for j in i..3 {
                assert!(sol.z.row(i).level(j as isize).iter().all(|z| (z - 1.0).abs() < 1e-14));
            }
        }
        assert!(bsvie_identity_error(&t, &phi, &h, &sol.y, &sol.z) < 1e-14);
    }
}
