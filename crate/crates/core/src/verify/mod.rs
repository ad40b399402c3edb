//! Grids, residuals, Crank–Nicolson propagation and the verification suite.

pub mod cn;
pub mod grid;
pub mod report;
pub mod residual;
pub mod suite;

pub use cn::{analytic_slice, cn_nodes, crank_nicolson, evolve, evolve_recorded, propagation_match, propagation_slices, CnOptions, CnRun, PropagationMatch};
pub use grid::{l2_error, l2_error_slices, sample, Geometry, Grid1D, GridFunction};
pub use report::{grid_function_csv, potential_csv, slices_csv, Check, Environment, VerificationReport};
pub use residual::{schrodinger_residual, schrodinger_residual_with, Residual, ResidualOptions};
pub use suite::{disambiguate, refinement_checks, run_suite, FamilyContext, Operator};
