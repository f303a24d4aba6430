//! Acceptance criteria 1–11, one line each on stderr.

use std::io::Write;
use std::process::Command;
use std::time::{Duration, Instant};

use nsfde_core::verify::suite::{self, Section};
use nsfde_core::verify::CheckReport;

struct Criterion {
    passed: bool,
    detail: String,
}

fn line(n: usize, title: &str, c: &Criterion, took: Duration) {
    let verdict = if c.passed { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr();
    let _ = writeln!(err, "criterion {n:>2} {verdict} {title}: {} [{:.2} s]", c.detail, took.as_secs_f64());
}

fn select<'a>(s: &'a Section, prefix: &str) -> Vec<&'a CheckReport> {
    s.reports.iter().filter(|r| r.check.starts_with(prefix)).collect()
}

fn judge(reports: &[&CheckReport], detail: impl Into<String>) -> Criterion {
    let failing: Vec<String> = reports
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("{} {:?} lhs {:e} rhs {:e}", r.check, r.config, r.lhs, r.rhs))
        .collect();
    Criterion {
        passed: !reports.is_empty() && failing.is_empty(),
        detail: if failing.is_empty() {
            format!("{} ({} checks)", detail.into(), reports.len())
        } else {
            format!("{} failing: {}", failing.len(), failing.join("; "))
        },
    }
}

fn worst(reports: &[&CheckReport], f: impl Fn(&CheckReport) -> f64) -> f64 {
    reports.iter().map(|r| f(r)).fold(f64::NEG_INFINITY, f64::max)
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn selftest_bytes(threads: &str) -> (Option<i32>, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_nsfde"))
        .args(["selftest", "--threads", threads])
        .output()
        .expect("the nsfde binary runs");
    (out.status.code(), out.stdout)
}

#[test]
fn acceptance_criteria() {
    let mut results = Vec::new();
    let mut solutions = Section::default();
    let mut record = |n: usize, title: &str, c: Criterion, took: Duration| {
        line(n, title, &c, took);
        results.push((n, c.passed));
    };

    let (duality, t1) = timed(|| suite::duality_identity(1..=20).expect("duality section"));
    let r = select(&duality, "duality");
    let mut c = judge(&r, format!("seeds 1-20, worst rel dev {:.2e}", worst(&r, |r| r.rel_dev)));
    if t1 >= Duration::from_secs(60) {
        c.passed = false;
        c.detail.push_str(", over the 60 s budget");
    }
    record(1, "duality identity", c, t1);

    let r = select(&duality, "m-condition");
    let recon: Vec<&CheckReport> = r.iter().copied().filter(|r| r.check == "m-condition-reconstruction").collect();
    record(2, "M-solution condition", judge(&r, format!("worst reconstruction {:.2e}", worst(&recon, |r| r.lhs))), Duration::ZERO);
    solutions.slacks.extend(duality.slacks.clone());

    let (s, t) = timed(|| suite::bsde_reduction().expect("bsde section"));
    let r = select(&s, "bsde-oracle");
    record(3, "BSDE reduction", judge(&r, format!("worst sup gap {:.2e}", worst(&r, |r| r.lhs))), t);
    solutions.slacks.extend(s.slacks);

    let (s, t) = timed(|| suite::equivalence().expect("equivalence section"));
    let r: Vec<&CheckReport> = s.reports.iter().collect();
    let eq = select(&s, "equivalence");
    record(4, "classical adjoint equivalence", judge(&r, format!("worst deviation {:.2e}", worst(&eq, |r| r.lhs))), t);
    solutions.slacks.extend(s.slacks);

    let (s, t) = timed(|| suite::gradient_consistency().expect("gradient section"));
    let r = select(&s, "gradient");
    let exact: Vec<&CheckReport> = r.iter().copied().filter(|r| r.check == "gradient-central-difference").collect();
    let ratios: Vec<String> = r.iter().filter(|r| r.check.starts_with("gradient-error-ratio")).map(|r| format!("{:.4}", r.lhs)).collect();
    let detail = format!("exact worst rel {:.2e}, tanh error ratios {}", worst(&exact, |r| r.rel_dev), ratios.join("/"));
    record(5, "maximum-principle gradient", judge(&r, detail), t);
    solutions.slacks.extend(s.slacks);

    let (s, t6) = timed(|| suite::optimizer().expect("optimizer section"));
    let r: Vec<&CheckReport> = s.reports.iter().collect();
    let gap = s.reports.iter().find(|r| r.check == "optimizer-cost-vs-riccati").map_or(f64::NAN, |r| r.abs_dev);
    let iters = s.reports.iter().find(|r| r.check == "optimizer-iterations").map_or(f64::NAN, |r| r.lhs);
    let mut c = judge(&r, format!("|J - J*| = {gap:.2e} after {iters} iterations"));
    if t6 >= Duration::from_secs(120) {
        c.passed = false;
        c.detail.push_str(", over the 120 s budget");
    }
    record(6, "optimizer against Riccati", c, t6);

    let (s, t) = timed(|| suite::picard_contraction().expect("picard section"));
    let r: Vec<&CheckReport> = s.reports.iter().collect();
    let ratio: Vec<String> = select(&s, "picard-update-ratio").iter().map(|r| format!("{:.4}", r.lhs)).collect();
    let sweeps: Vec<String> = select(&s, "picard-iterations").iter().map(|r| format!("{}", r.lhs)).collect();
    record(7, "Picard contraction", judge(&r, format!("max ratios {}, sweeps {}", ratio.join("/"), sweeps.join("/"))), t);
    solutions.slacks.extend(s.slacks);

    let (s, t) = timed(|| suite::estimates().expect("estimate section"));
    let r: Vec<&CheckReport> = s.reports.iter().collect();
    let ratios: Vec<String> = r.iter().map(|r| format!("{:.3}", r.lhs)).collect();
    record(8, "a-priori estimates", judge(&r, format!("worst ratios {}; {}", ratios.join("/"), s.notes.join("; "))), t);

    let norms = solutions.norm_reports();
    let r: Vec<&CheckReport> = norms.iter().collect();
    record(9, "norm equivalence", judge(&r, format!("min slack {:.3e}", -worst(&r, |r| -r.lhs))), Duration::ZERO);

    let (s, t) = timed(|| suite::expansion().expect("expansion section"));
    let r: Vec<&CheckReport> = s.reports.iter().collect();
    record(10, "first-order expansion", judge(&r, s.notes.join("; ")), t);

    let ((one, eight), t) = timed(|| (selftest_bytes("1"), selftest_bytes("8")));
    let c = Criterion {
        passed: one.0 == Some(0) && eight.0 == Some(0) && one.1 == eight.1 && !one.1.is_empty(),
        detail: format!(
            "exit codes {:?}/{:?}, {} vs {} bytes, identical: {}",
            one.0,
            eight.0,
            one.1.len(),
            eight.1.len(),
            one.1 == eight.1
        ),
    };
    record(11, "determinism across thread counts", c, t);

    let failed: Vec<usize> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
