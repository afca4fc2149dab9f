//! Bilinear finite elements on uniform structured grids.

pub mod assembly;
pub mod banded;
pub mod cg;
pub mod function;
pub mod grid;
pub mod sparse;

pub use assembly::{
    assemble_load, assemble_mass, assemble_stiffness, assemble_weighted_mass,
    gradient_load_from_quadrature, load_from_quadrature,
};
pub use banded::BandCholesky;
pub use cg::{cg_solve, cg_solve_with_stats, CgOptions, CgStats};
pub use function::{
    boundary_flux, h1_seminorm, l2_inner, l2_norm, quadrature_energy, recover_gradient, GridFunction,
};
pub use grid::{DirichletGrid, Grid, PeriodicGrid};
pub use sparse::SparseOperator;
