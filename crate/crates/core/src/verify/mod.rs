//! Certification of the duality identity, the first-order expansion and the
//! maximum-principle gradient against independent evaluations, and report
//! emission.

mod duality;
mod expansion;
mod oracle;
mod report;
pub mod suite;

pub use duality::{duality_check, duality_for_problem, duality_terms, random_control, DualityOutcome, DualityTerms};
pub use expansion::{expansion_check, gradient_check, ExpansionOutcome, GradientCheckOutcome, GradientRule, RatioRule};
pub use oracle::{bsde_backward_induction, bsde_reduction_gap, smooth_payoff, Riccati};
pub use report::{
    all_pass, echo, emit_report, rel_dev, render_report, write_report, CheckReport, ConfigEcho, ReportFormat, ABS_FLOOR,
};
