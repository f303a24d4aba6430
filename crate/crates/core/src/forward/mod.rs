//! Controlled neutral state equation, its variational equation and the cost.

mod problem;
mod solve;
mod variational;

pub use problem::{
    constant_control, CoefficientDerivatives, Coefficients, ControlBox, ControlProcess, LagMeasures,
    NeutralSettings, NsfdeProblem,
};
pub use solve::{eval_cost, neutral_part, neutral_resolve, path_distance, solve_nsfde, ForwardSolution, Resolved};
pub use variational::{
    control_cost_derivative, first_order_check, pairing, perturbation, shifted_control, solve_variational,
    state_cost_derivative, sup_norm, ExpansionRow, ExpansionTable,
};
