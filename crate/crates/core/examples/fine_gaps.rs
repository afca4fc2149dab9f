//! Eigenvalue gaps against the resolution-matched homogenized reference on a
//! 512 grid, including ε = 1/32 (outside the default sweep). Takes a few
//! minutes on one core.
//!
//!     cargo run --release --example fine_gaps

use homlab::cell::{solve_cell, CellOptions};
use homlab::coefficients::{CoefficientModel, MatrixPreset, PotentialPreset, SourcePreset};
use homlab::domain::{homogenized_operators, EpsProblem};
use homlab::fem::DirichletGrid;
use homlab::spectral::{eigs, EigOptions};

fn main() -> homlab::Result<()> {
    let model = CoefficientModel::new(MatrixPreset::SmoothIso, PotentialPreset::Sine1, SourcePreset::SineSine);
    let n = 512;
    for eps in [1.0 / 16.0, 1.0 / 32.0] {
        let p = (eps * n as f64).round() as usize;
        let cell = solve_cell(&model, &CellOptions::new(p))?;
        let (k_prime, mass) = homogenized_operators(&cell.a_hat, DirichletGrid::new(n))?;
        let hom = eigs(&k_prime.add_scaled(&mass, cell.m_w_chi_w), &mass, &EigOptions::new(5))?;
        let problem = EpsProblem::new(model.clone(), eps, n)?;
        let spec = eigs(&problem.stiffness()?, &mass, &EigOptions::new(5).with_fallback_shift(problem.safe_shift()))?;
        println!("eps = {eps} (n = {n}, {p} cells per period)");
        for k in 0..5 {
            let (le, l0) = (spec.eigenvalues[k], hom.eigenvalues[k]);
            println!("  k = {}: lambda_eps {le:.8}  lambda_0 {l0:.8}  gap {:.4e}", k + 1, (le - l0).abs());
        }
    }
    Ok(())
}
