//! Reference solutions computed by code that shares nothing with the solvers:
//! discrete Riccati, backward induction, and path-by-path enumeration.

use nsfde_core::adjoint::evaluate_gradient;
use nsfde_core::backward::{m_condition_error, PicardSettings};
use nsfde_core::forward::{eval_cost, solve_nsfde, ControlProcess, NsfdeProblem};
use nsfde_core::grid::{Direction, PathSegment, TimeGrid};
use nsfde_core::presets::{build_preset, PresetName, PresetOptions};
use nsfde_core::process::NodeRef;
use nsfde_core::tree::ScenarioTree;
use nsfde_core::verify::{bsde_backward_induction, bsde_reduction_gap, random_control, smooth_payoff, Riccati};

fn tree(n: usize, l: usize) -> ScenarioTree {
    ScenarioTree::with_default_budget(TimeGrid::new(1.0, n, l).unwrap(), 1).unwrap()
}

fn cost_of(p: &NsfdeProblem, u: &ControlProcess, t: &ScenarioTree) -> f64 {
    let x = solve_nsfde(p, u, t).unwrap().x;
    eval_cost(p, &x, u, t).unwrap()
}

#[test]
fn riccati_feedback_attains_the_riccati_value() {
    let t = tree(6, 0);
    let p = build_preset(PresetName::Lq, *t.grid(), &PresetOptions::default()).unwrap();
    let r = Riccati::solve(6, t.dt());
    let u = r.optimal_control(&t, 1.0).unwrap();
    let j = cost_of(&p, &u, &t);
    assert!((j - r.value(1.0)).abs() < 1e-12, "{j} vs {}", r.value(1.0));
}

#[test]
fn riccati_control_is_stationary_and_minimal() {
    let t = tree(6, 0);
    let p = build_preset(PresetName::Lq, *t.grid(), &PresetOptions::default()).unwrap();
    let r = Riccati::solve(6, t.dt());
    let u = r.optimal_control(&t, 1.0).unwrap();
    let eval = evaluate_gradient(&p, &u, &t, &PicardSettings::default()).unwrap();
    let h_sup = (0..6).map(|k| eval.gradient.level(k).iter().fold(0.0_f64, |m, h| m.max(h.abs()))).fold(0.0, f64::max);
    assert!(h_sup < 1e-12, "gradient at the Riccati control: {h_sup}");
    let j = r.value(1.0);
    for seed in 0..5 {
        let mut w = u.clone();
        w.axpy(0.05, &random_control(&t, 1, seed, 1.0));
        assert!(cost_of(&p, &w, &t) > j);
    }
}

#[test]
fn riccati_recursion_small_case() {
    let r = Riccati::solve(1, 0.5);
    assert_eq!(r.p, vec![0.5, 0.0]);
    assert_eq!(r.c, vec![0.0, 0.0]);
    let r = Riccati::solve(2, 0.5);
    assert!((r.p[0] - (0.5 + 0.5 / 1.25)).abs() < 1e-15);
    assert!((r.c[0] - 0.25).abs() < 1e-15);
}

#[test]
fn volterra_solver_reduces_to_backward_induction() {
    let t = tree(10, 0);
    let payoff = smooth_payoff(&t);
    for rate in [0.0, 1.3, -0.6] {
        let (sol, gap) = bsde_reduction_gap(&t, &payoff, rate, &PicardSettings::default()).unwrap();
        assert!(gap <= 1e-10, "rate {rate}: {gap}");
        let (recon, zero) = m_condition_error(&t, &sol).unwrap();
        assert!(recon <= 1e-12 && zero == 0.0);
    }
}

#[test]
fn backward_induction_of_a_martingale_is_the_conditional_mean() {
    let t = tree(5, 0);
    let w = t.brownian(5);
    let y = bsde_backward_induction(&t, &w, 0.0).unwrap();
    for j in 0..=5 {
        let expected = t.brownian(j as usize);
        for (a, b) in y.level(j).iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}

/// Euler scheme with the neutral fixed point, one root-to-leaf path at a time.
fn brute_force_path(p: &NsfdeProblem, u: &ControlProcess, t: &ScenarioTree, leaf: usize) -> Vec<Vec<f64>> {
    let c = p.coefficients.as_ref();
    let (n, d) = (c.state_dim(), c.noise_dim());
    let steps = t.steps();
    let l = p.grid.delay_steps();
    let mut hist: Vec<Vec<f64>> = p.initial.clone();
    let window = |hist: &Vec<Vec<f64>>| {
        let lags: Vec<Vec<f64>> = (0..=l).map(|r| hist[hist.len() - 1 - r].clone()).collect();
        PathSegment::from_lags(Direction::Backward, &lags)
    };
    let mut g = vec![0.0; n];
    c.g(p.grid.point(0), &window(&hist), &mut g);
    let mut dstate: Vec<f64> = hist[l].iter().zip(&g).map(|(x, gv)| x - gv).collect();
    for i in 0..steps {
        let node = leaf >> (d * (steps - i));
        let child = leaf >> (d * (steps - i - 1));
        let win = window(&hist);
        let uv = u.get(i as isize, node).to_vec();
        let mut b = vec![0.0; n];
        let mut s = vec![0.0; n * d];
        c.b(p.grid.point(i as isize), &win, &uv, &mut b);
        c.sigma(p.grid.point(i as isize), &win, &uv, &mut s);
        for r in 0..n {
            dstate[r] += b[r] * t.dt() + (0..d).map(|k| s[r * d + k] * t.increment(child, k)).sum::<f64>();
        }
        let mut x = dstate.clone();
        for _ in 0..200 {
            hist.push(x.clone());
            c.g(p.grid.point(i as isize + 1), &window(&hist), &mut g);
            hist.pop();
            let next: Vec<f64> = dstate.iter().zip(&g).map(|(a, b)| a + b).collect();
            let done = next.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-15);
            x = next;
            if done {
                break;
            }
        }
        hist.push(x);
    }
    hist[l..].to_vec()
}

#[test]
fn forward_solver_matches_path_enumeration() {
    let cases = [
        (PresetName::NeutralTanh, 5, 2),
        (PresetName::NeutralLinear, 5, 1),
        (PresetName::DelayLinear, 5, 3),
        (PresetName::RandomLinear, 4, 2),
        (PresetName::SinDrift, 5, 0),
    ];
    for (name, n, l) in cases {
        let t = tree(n, l);
        let p = build_preset(name, *t.grid(), &PresetOptions { kappa: 0.7, seed: 5 }).unwrap();
        let u = random_control(&t, p.control_dim(), 9, 1.0);
        let x = solve_nsfde(&p, &u, &t).unwrap().x;
        let mut worst = 0.0_f64;
        for leaf in 0..t.node_count(n as isize) {
            let path = brute_force_path(&p, &u, &t, leaf);
            for (i, xi) in path.iter().enumerate() {
                let v = x.value_seen_from(i as isize, NodeRef::new(n as isize, leaf));
                worst = xi.iter().zip(v).fold(worst, |m, (a, b)| m.max((a - b).abs()));
            }
        }
        assert!(worst < 1e-11, "{name}: {worst}");
    }
}

/// `∂J/∂u(node) = h(node)·P(node)·dt`, checked node by node.
fn nodewise_gradient(name: PresetName, eps: f64, tol: f64) {
    let t = tree(4, 1);
    let p = build_preset(name, *t.grid(), &PresetOptions { kappa: 0.6, seed: 3 }).unwrap();
    let m = p.control_dim();
    let u = random_control(&t, m, 17, 1.0);
    let tight = PicardSettings {
        tol: 1e-14,
        max_iter: 400,
        ..PicardSettings::default()
    };
    let h = evaluate_gradient(&p, &u, &t, &tight).unwrap().gradient;
    for k in 0..4isize {
        let prob = 1.0 / t.node_count(k) as f64;
        for node in 0..t.node_count(k) {
            for c in 0..m {
                let bump = |s: f64| {
                    let mut w = u.clone();
                    w.get_mut(k, node)[c] += s;
                    cost_of(&p, &w, &t)
                };
                let fd = (bump(eps) - bump(-eps)) / (2.0 * eps);
                let predicted = h.get(k, node)[c] * prob * t.dt();
                assert!(
                    (fd - predicted).abs() <= tol * predicted.abs().max(1e-3),
                    "{name} level {k} node {node} component {c}: {fd} vs {predicted}"
                );
            }
        }
    }
}

#[test]
fn gradient_matches_nodewise_differences_on_affine_presets() {
    for name in [PresetName::Lq, PresetName::DelayLinear, PresetName::NeutralLinear, PresetName::RandomLinear] {
        nodewise_gradient(name, 0.1, 1e-9);
    }
}

#[test]
fn gradient_matches_nodewise_differences_on_nonlinear_presets() {
    for name in [PresetName::NeutralTanh, PresetName::SinDrift] {
        nodewise_gradient(name, 1e-4, 1e-6);
    }
}
