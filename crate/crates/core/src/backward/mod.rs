//! Neutral backward Volterra equations: generator interface, the inner
//! Volterra solve, the Picard contraction and its diagnostics.

mod bsvie;
mod estimates;
mod generator;
mod norms;
mod picard;

pub use bsvie::{bsde_path, bsvie_identity_error, solve_bsvie, solve_bsvie_row, BsvieSolution};
pub use estimates::{
    bsde_estimate, bsvie_estimate, check_weights, estimate_diagnostics, lipschitz_probe, random_bsvie_data,
    EstimateDiagnostics, EstimateReport, LipschitzProbe,
};
pub use generator::{
    AffineScalarGenerator, Generator, GeneratorMeasures, MSolution, PureNeutralGenerator, TerminalData,
};
pub use norms::{norm_equivalence, weighted_update_norm, NormEquivalence};
pub use picard::{
    complete_m_solution, equation_residual, initial_iterate, m_condition_error, picard_map, picard_residual,
    solve_vnbsfe, solve_vnbsfe_from, Initialization, PicardLog, PicardOutcome, PicardSettings, PicardStep,
};
