use proptest::prelude::*;

use nsfde_core::adjoint::{assemble_adjoint, check_variational_inequality, linearize};
use nsfde_core::backward::{
    bsde_estimate, bsvie_estimate, bsvie_identity_error, norm_equivalence, random_bsvie_data, solve_bsvie, solve_vnbsfe, Initialization,
    PicardSettings, PureNeutralGenerator, TerminalData,
};
use nsfde_core::forward::{solve_nsfde, ControlBox};
use nsfde_core::grid::{DiscreteLagMeasure, TimeGrid};
use nsfde_core::presets::{build_preset, PresetName, PresetOptions};
use nsfde_core::tree::ScenarioTree;
use nsfde_core::verify::{duality_for_problem, echo, random_control, rel_dev, render_report, CheckReport, ReportFormat};

fn tree(n: usize, l: usize) -> ScenarioTree {
    ScenarioTree::with_default_budget(TimeGrid::new(1.0, n, l).unwrap(), 1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tower_property(seed in 0u64..1000, to in 0isize..4, mid in 0isize..4) {
        let t = tree(5, 0);
        let vals = random_control(&t, 1, seed, 2.0);
        let top = vals.level(4).to_vec();
        let (lo, hi) = (to.min(mid), to.max(mid));
        let direct = t.cond_expect(&top, 1, 4, lo).unwrap();
        let two = t.cond_expect(&t.cond_expect(&top, 1, 4, hi).unwrap(), 1, hi, lo).unwrap();
        for (a, b) in direct.iter().zip(&two) {
            prop_assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn martingale_representation_reconstructs(seed in 0u64..1000, level in 1isize..6) {
        let t = tree(6, 0);
        let v = random_control(&t, 2, seed, 3.0);
        let lvl = level.min(5);
        let values = v.level(lvl).to_vec();
        let rep = t.martingale_represent(&values, 2, lvl).unwrap();
        let back = t.reconstruct(&rep.mean, &rep.integrand, lvl).unwrap();
        for (a, b) in back.iter().zip(&values) {
            prop_assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn lag_measures_need_unit_mass(w in prop::collection::vec(0.01f64..1.0, 1..5), off in 1e-9f64..0.5, exact: bool) {
        let total: f64 = w.iter().sum();
        let scale = if exact { 1.0 } else { 1.0 + off };
        let atoms: Vec<(usize, f64)> = w.iter().enumerate().map(|(k, x)| (k, x / total * scale)).collect();
        prop_assert_eq!(DiscreteLagMeasure::new(atoms).is_ok(), exact);
    }

    #[test]
    fn projection_lands_in_the_box_and_is_idempotent(seed in 0u64..1000, w in 0.1f64..2.0) {
        let t = tree(4, 0);
        let bx = ControlBox::symmetric(2, w);
        let u = random_control(&t, 2, seed, 3.0);
        let p = bx.project(&u);
        prop_assert!(bx.contains_process(&p));
        prop_assert_eq!(bx.project(&p), p.clone());
        // p minimises ½|w − u|² over the box, so its gradient p − u satisfies the inequality.
        let mut h = p.clone();
        h.axpy(-1.0, &u);
        let vi = check_variational_inequality(&h, &p, &bx, 0.0).unwrap();
        prop_assert!(vi.pass, "{:?}", vi);
    }

    #[test]
    fn rel_dev_is_symmetric_and_bounded(a in -1e6f64..1e6, b in -1e6f64..1e6) {
        prop_assert_eq!(rel_dev(a, b), rel_dev(b, a));
        prop_assert!(rel_dev(a, b) <= 2.0);
    }

    #[test]
    fn reports_round_trip(lhs in -1e300f64..1e300, rhs in -1e300f64..1e300, tol in 0.0f64..1.0) {
        let c = echo("lq", &TimeGrid::new(1.0, 3, 0).unwrap(), Some(1));
        let r = vec![CheckReport::compare("x", lhs, rhs, tol, &c)];
        let back: Vec<CheckReport> = serde_json::from_str(&render_report(&r, ReportFormat::Json)).unwrap();
        prop_assert_eq!(back, r);
    }

    #[test]
    fn estimates_bind_without_being_vacuous(seed in 0u64..1000, row in 0usize..5) {
        let t = tree(5, 1);
        let (phi, h) = random_bsvie_data(&t, 1, seed);
        let b = bsde_estimate(&t, row, &phi[row], &h[row], 1, 1.0, 3.0).unwrap();
        prop_assert!(b.satisfied && b.ratio() >= 0.5 && b.ratio() <= 1.0, "{:?}", b);
        let (w, _) = bsvie_estimate(&t, row, &phi[row], &h[row], 1, 1.0, 3.0).unwrap();
        prop_assert!(w.satisfied && w.ratio() > 0.0, "{:?}", w);
    }

    #[test]
    fn volterra_rows_satisfy_their_identity(seed in 0u64..1000) {
        let t = tree(5, 1);
        let (phi, h) = random_bsvie_data(&t, 1, seed);
        let sol = solve_bsvie(&t, &phi, &h, 1).unwrap();
        prop_assert!(bsvie_identity_error(&t, &phi, &h, &sol.y, &sol.z) < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn duality_holds_for_random_data(seed in 0u64..10_000, l in 0usize..3) {
        let grid = TimeGrid::new(1.0, 5, l).unwrap();
        let t = ScenarioTree::with_default_budget(grid, 1).unwrap();
        let p = build_preset(PresetName::RandomLinear, grid, &PresetOptions { seed, ..Default::default() }).unwrap();
        let ubar = random_control(&t, 2, seed + 1, 1.0);
        let v = random_control(&t, 2, seed + 2, 1.0);
        let tight = PicardSettings { tol: 1e-13, max_iter: 400, ..Default::default() };
        let d = duality_for_problem(&p, &ubar, &v, &t, &tight, 1e-9, &echo("random-linear", &grid, Some(seed))).unwrap();
        for r in &d.reports {
            prop_assert!(r.pass, "{:?}", r);
        }
        let ne = norm_equivalence(&d.adjoint, &t, 3.0);
        prop_assert!(ne.holds(1e-12), "{:?}", ne);
    }

    #[test]
    fn picard_limit_does_not_depend_on_the_start(seed in 0u64..10_000, kappa in 0.1f64..0.9) {
        let grid = TimeGrid::new(1.0, 5, 2).unwrap();
        let t = ScenarioTree::with_default_budget(grid, 1).unwrap();
        let p = build_preset(PresetName::NeutralLinear, grid, &PresetOptions { kappa, seed }).unwrap();
        let u = random_control(&t, 1, seed, 1.0);
        let x = solve_nsfde(&p, &u, &t).unwrap().x;
        let lin = linearize(&p, &x, &u, &t).unwrap();
        let (gen, term) = assemble_adjoint(&lin, &t).unwrap();
        let base = PicardSettings { tol: 1e-13, max_iter: 500, ..Default::default() };
        let a = solve_vnbsfe(&gen, &term, &t, &base).unwrap().solution;
        let b = solve_vnbsfe(&gen, &term, &t, &PicardSettings { init: Initialization::Random { seed }, ..base }).unwrap().solution;
        prop_assert!(a.y.max_abs_diff(&b.y) < 1e-11);
        prop_assert!(a.z.max_abs_diff(&b.z) < 1e-10);
    }

    #[test]
    fn pure_neutral_ratios_stay_below_the_coefficient(c in 0.05f64..0.95, seed in 0u64..1000) {
        let t = tree(5, 2);
        let gen = PureNeutralGenerator::new(c, 1, DiscreteLagMeasure::uniform(&[0, 2]).unwrap());
        let (phi, _) = random_bsvie_data(&t, 1, seed);
        let mut term = TerminalData::zeros(&t, 1);
        term.psi = phi;
        let res = solve_vnbsfe(&gen, &term, &t, &PicardSettings { max_iter: 500, ..Default::default() }).unwrap();
        let norms: Vec<f64> = res.log.steps.iter().map(|s| s.update_norm).collect();
        for w in norms.windows(2) {
            if w[0] > 1e-13 {
                prop_assert!(w[1] / w[0] <= c + 1e-9, "{} > {}", w[1] / w[0], c);
            }
        }
    }
}
