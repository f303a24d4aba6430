use nsfde_core::verify::suite::{self, Section};
use nsfde_core::verify::CheckReport;

fn failures(s: &Section) -> Vec<&CheckReport> {
    s.reports.iter().filter(|r| !r.pass).collect()
}

fn assert_section(name: &str, s: Section) {
    for n in &s.notes {
        println!("{name}: {n}");
    }
    let norms = s.norm_reports();
    let bad: Vec<_> = failures(&s).into_iter().chain(norms.iter().filter(|r| !r.pass)).collect();
    assert!(bad.is_empty(), "{name}: {bad:#?}");
}

#[test]
fn duality_few_seeds() {
    assert_section("duality", suite::duality_identity(1..=3).unwrap());
}

#[test]
fn duality_undelayed() {
    assert_section("duality-undelayed", suite::duality_undelayed().unwrap());
}

#[test]
fn bsde_reduction() {
    assert_section("bsde", suite::bsde_reduction().unwrap());
}

#[test]
fn equivalence() {
    assert_section("equivalence", suite::equivalence().unwrap());
}

#[test]
fn gradient() {
    assert_section("gradient", suite::gradient_consistency().unwrap());
}

#[test]
fn optimizer() {
    assert_section("optimizer", suite::optimizer().unwrap());
}

#[test]
fn picard() {
    assert_section("picard", suite::picard_contraction().unwrap());
}

#[test]
fn estimates() {
    assert_section("estimates", suite::estimates().unwrap());
}

#[test]
fn expansion() {
    assert_section("expansion", suite::expansion().unwrap());
}
