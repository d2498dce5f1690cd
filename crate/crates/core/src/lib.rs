//! Periodic homogenization of elastodynamics in a soft-inclusion composite
//! driven by a strong oscillating magnetic field.
//!
//! The crate computes the cell data (inclusion eigenmodes, periodic
//! correctors, effective coefficients), the memory kernel of the limit
//! equation, integrates the macroscopic equation, and runs direct fine-scale
//! simulations to compare against.

pub mod correctors;
pub mod error;
pub mod expr;
pub mod finescale;
pub mod fingerprint;
pub mod kernel;
pub mod linalg;
pub mod macroscale;
pub mod perfem;
pub mod pipeline;
pub mod spectrum;
pub mod unitcell;

pub use error::{Error, Result};
