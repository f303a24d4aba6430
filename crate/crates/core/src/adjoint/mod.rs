//! The linear adjoint of the control problem, the maximum-principle
//! gradient, a projected-gradient optimizer and the classical adjoint of the
//! undelayed case.

mod assemble;
mod bismut;
mod gradient;
mod linearize;
mod optimize;

pub use assemble::{adjoint_terminal, assemble_adjoint, AdjointGenerator};
pub use bismut::{bismut_duality_value, bismut_residual, equivalence_check, solve_bismut_adjoint, BismutAdjoint, Equivalence};
pub use gradient::{
    check_variational_inequality, diagonal_sum, forward_sum, gradient_from_aggregates, gradient_pairing,
    hamiltonian_gradient, ViReport, AT_BOUND_TOL,
};
pub use linearize::{linearize, Linearization, StateKernels};
pub use optimize::{
    evaluate_gradient, projected_gradient_descent, GradientEval, OptimizeOutcome, OptimizerSettings, StepRule,
};
