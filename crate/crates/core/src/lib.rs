//! Numerical laboratory for periodic homogenization of
//! `−div(A(x/ε)∇u) + ε⁻¹ W(x/ε) u = f` on the unit square.
//!
//! The crate solves the periodic cell problems, assembles the homogenized
//! operator, computes Dirichlet correctors and spectra of the oscillating and
//! effective operators, and measures how the differences scale with `ε`.

pub mod analysis;
pub mod cell;
pub mod coefficients;
pub mod config;
pub mod domain;
pub mod error;
pub mod fem;
pub mod pipeline;
pub mod spectral;

pub use config::Config;
pub use coefficients::{make_preset, validate, CoefficientModel, Mat2, ValidationReport};
pub use error::{Error, Result};
