//! Finite-element operators on voxel grids: trilinear hexahedra, 2x2x2 Gauss
//! quadrature, matrix-free application.

pub mod cg;
pub mod element;
pub mod forms;
pub mod grid;
pub mod tensor;

pub use cg::{cg_solve, Cg, CgOptions, CgReport, ComponentMeanFree, Projector};
pub use forms::{assemble_constrained_forms, assemble_periodic_elasticity, ConstrainedForms, PeriodicElasticity};
pub use grid::{GridOperator, LinearOperator, Topology, VoxelGrid};
pub use tensor::{unit_strain, ElasticTensor, TensorSpec, VOIGT_PAIRS};
