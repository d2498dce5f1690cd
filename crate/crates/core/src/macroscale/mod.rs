//! Time integration of the limit equation for alpha on the unit cube.
//!
//! The bracket w = M* alpha - sum_i a_i r_i, a_i = (hbar_i . xi)^2, is advanced
//! by a second difference,
//!
//!   w^{n+1} = 2 w^n - w^{n-1} + dt^2 (mu*.f + F + div(A1dir grad alpha) - c* alpha
//!             + sum_i kappa_i r_i - lambda* . grad d_t alpha),
//!
//! and the registers (r_i, z_i) by the exact rotation for d_t alpha constant over
//! a step. Since r_i^{n+1} depends linearly on alpha^{n+1}, each node solves one
//! scalar equation. Initial velocity of alpha is zero.

mod data;
mod forcing;
mod grid;
mod solver;

pub use data::{InitialData, ScenarioSpec, DIFF_STEP};
pub use forcing::{assemble_forcing_f, MemoryForce};
pub use grid::{MacroBoundary, MacroGrid};
pub use solver::{
    reduced_equation_residual, MacroCoefficients, MacroLimits, MacroRecord, MacroSolver, MacroState, GROWTH_LIMIT,
};
