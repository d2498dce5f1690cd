//! Configuration, artifact store and the stages driven by the command line.

mod check;
mod config;
mod report;
mod stages;
mod store;

pub use check::{run_checks, CheckResult};
pub use config::{
    CaseSelector, Discretization, FineConfig, KernelConfig, MacroConfig, RunConfig, Scenario, Stage, Tensors,
};
pub use report::emit_report;
pub use stages::{
    convergence_study, fine_run, frozen_trajectory, macro_trajectory, solve_cell, solve_cell_coefficients, Case, Cell,
    CellSolution, CellSummary, CoeffsFile, FineRun, LimitSample, ModesFile, Pipeline, CONVERGE_HEADER, FINE_HEADER,
};
pub use store::{num, ArtifactStore, RawSidecar, ARTIFACTS};
