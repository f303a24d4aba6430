//! Controlled neutral stochastic functional differential equations, their
//! Volterra-type neutral backward adjoints, and maximum-principle tooling on
//! an exact scenario tree.

pub mod adjoint;
pub mod backward;
pub mod composition;
pub mod error;
pub mod forward;
pub mod grid;
pub mod linalg;
pub mod presets;
pub mod process;
pub mod tree;
pub mod two_param;
pub mod verify;

pub use error::{Error, Result};
