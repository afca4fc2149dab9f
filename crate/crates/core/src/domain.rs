//! Problems on the unit square `Ω = (0,1)²` with homogeneous Dirichlet data:
//! the oscillating problem, its homogenized limit, and the Dirichlet
//! correctors `Φ_j = x_j + φ` with `−div(A(x/ε)∇Φ_j) = 0`, `Φ_j = x_j` on `∂Ω`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::cell::sym2_eigenvalues;
use crate::coefficients::{CoefficientModel, Mat2};
use crate::error::{Error, Result};
use crate::fem::{
    assemble_load, assemble_mass, assemble_stiffness, assemble_weighted_mass, cg_solve,
    gradient_load_from_quadrature, CgOptions, DirichletGrid, Grid, GridFunction, SparseOperator,
};
use crate::spectral::{eigs, EigOptions};

/// Cells per period required on the domain grid.
pub const CELLS_PER_PERIOD: f64 = 16.0;

/// The oscillating problem at one `ε` on an `n × n` grid.
#[derive(Clone, Debug)]
pub struct EpsProblem {
    epsilon: f64,
    model: CoefficientModel,
    grid: DirichletGrid,
}

impl EpsProblem {
    /// Rejects `ε ∉ (0, 1]` and grids coarser than `h ≤ ε/16`.
    pub fn new(model: CoefficientModel, epsilon: f64, n: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::Config(format!("epsilon must lie in (0, 1], got {epsilon}")));
        }
        let grid = DirichletGrid::new(n);
        let h = grid.h();
        if h > epsilon / CELLS_PER_PERIOD * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "resolution rule violated: h = 1/{n} exceeds epsilon/16 = {} (need domain_grid_n >= {})",
                epsilon / CELLS_PER_PERIOD,
                (CELLS_PER_PERIOD / epsilon).ceil()
            )));
        }
        Ok(Self { epsilon, model, grid })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn model(&self) -> &CoefficientModel {
        &self.model
    }

    pub fn grid(&self) -> DirichletGrid {
        self.grid
    }

    /// `A(x/ε)`
    pub fn a_eps(&self, x: [f64; 2]) -> Mat2 {
        self.model.a([x[0] / self.epsilon, x[1] / self.epsilon])
    }

    /// `ε⁻¹ W(x/ε)`
    pub fn w_eps(&self, x: [f64; 2]) -> f64 {
        self.model.w([x[0] / self.epsilon, x[1] / self.epsilon]) / self.epsilon
    }

    /// Stiffness of `L′_ε = −div(A(x/ε)∇)`.
    pub fn stiffness_prime(&self) -> Result<SparseOperator> {
        assemble_stiffness(self.grid, |x| self.a_eps(x))
    }

    /// Stiffness of `L_ε`; equals `L′_ε` when the potential vanishes.
    pub fn stiffness(&self) -> Result<SparseOperator> {
        let k = self.stiffness_prime()?;
        if !self.model.has_potential() {
            return Ok(k);
        }
        let p = assemble_weighted_mass(self.grid, |x| self.w_eps(x))?;
        Ok(k.add_scaled(&p, 1.0))
    }

    pub fn mass(&self) -> SparseOperator {
        assemble_mass(self.grid)
    }

    /// Shift that makes `L_ε + σ` positive definite whatever the sign of `W`.
    pub fn safe_shift(&self) -> f64 {
        self.model.w_sup() / self.epsilon + 1.0
    }

    /// `⟨L_ε u, u⟩` evaluated pointwise from the field, independent of the
    /// assembled matrices.
    pub fn quadrature_energy(&self, u: &GridFunction) -> f64 {
        crate::fem::quadrature_energy(u, |x| self.a_eps(x), |x| self.w_eps(x))
    }
}

/// Solves `L_ε u = f` with CG. A breakdown means the operator is indefinite;
/// the error then carries the computed `λ_ε,1`.
pub fn solve_eps(problem: &EpsProblem, f: impl Fn([f64; 2]) -> f64, cg: &CgOptions) -> Result<GridFunction> {
    let k = problem.stiffness()?;
    let rhs = assemble_load(problem.grid, f);
    match cg_solve(&k, &rhs, cg) {
        Ok(x) => Ok(GridFunction::from_dofs(problem.grid, &x)),
        Err(Error::Breakdown { .. }) => {
            let m = problem.mass();
            let spec = eigs(&k, &m, &EigOptions::new(1).with_fallback_shift(problem.safe_shift()))?;
            Err(Error::Coercivity { lambda_eps_1: spec.eigenvalues[0] })
        }
        Err(e) => Err(e),
    }
}

/// Lower bound `λ_min(Â)·2π²` for the first Dirichlet eigenvalue of `−div(Â∇)`.
pub fn hom_prime_lower_bound(a_hat: &Mat2) -> f64 {
    sym2_eigenvalues(a_hat)[0] * 2.0 * PI * PI
}

/// Operators `(K′_0, M)` of `L′_0 = −div(Â∇)` on a grid.
pub fn homogenized_operators(a_hat: &Mat2, grid: DirichletGrid) -> Result<(SparseOperator, SparseOperator)> {
    let a = *a_hat;
    Ok((assemble_stiffness(grid, move |_| a)?, assemble_mass(grid)))
}

/// Solves `−div(Â∇u) + M(Wχ_w) u = f`. The solvability hypothesis
/// `M(Wχ_w) > −λ′_0,1` is checked against `lambda0_prime_1` when supplied,
/// otherwise against the lower bound [`hom_prime_lower_bound`].
pub fn solve_homogenized(
    a_hat: &Mat2,
    m_w_chi_w: f64,
    grid: DirichletGrid,
    f: impl Fn([f64; 2]) -> f64,
    lambda0_prime_1: Option<f64>,
    cg: &CgOptions,
) -> Result<GridFunction> {
    let bound = lambda0_prime_1.unwrap_or_else(|| hom_prime_lower_bound(a_hat));
    if !(m_w_chi_w > -bound) {
        return Err(Error::Config(format!(
            "homogenized operator not coercive: M(W chi_w) = {m_w_chi_w} <= -lambda'_0,1 = {}",
            -bound
        )));
    }
    let (k, m) = homogenized_operators(a_hat, grid)?;
    let op = if m_w_chi_w != 0.0 { k.add_scaled(&m, m_w_chi_w) } else { k };
    let rhs = assemble_load(grid, f);
    let x = cg_solve(&op, &rhs, cg)?;
    Ok(GridFunction::from_dofs(grid, &x))
}

/// `Φ_1, Φ_2` on every node of the closed square.
#[derive(Clone, Debug)]
pub struct DirichletCorrectors {
    pub epsilon: f64,
    pub phi: [GridFunction; 2],
}

impl DirichletCorrectors {
    /// `Φ_j − x_j`
    pub fn deviation(&self, j: usize) -> GridFunction {
        let g = self.phi[j].grid();
        let vals = (0..g.node_count()).map(|k| self.phi[j].values()[k] - g.node_coords(k)[j]).collect();
        GridFunction::from_values(g, vals)
    }

    /// `max |Φ_j − x_j|`
    pub fn sup_deviation(&self, j: usize) -> f64 {
        self.deviation(j).max_abs()
    }
}

pub fn solve_dirichlet_correctors(problem: &EpsProblem, cg: &CgOptions) -> Result<DirichletCorrectors> {
    let g = Grid::from(problem.grid);
    let k = problem.stiffness_prime()?;
    let a_q: Vec<Mat2> = g.quadrature_points().into_iter().map(|x| problem.a_eps(x)).collect();
    let solve = |j: usize| -> Result<GridFunction> {
        let flux: Vec<[f64; 2]> = a_q.iter().map(|a| [-a[0][j], -a[1][j]]).collect();
        let rhs = gradient_load_from_quadrature(g, &flux);
        let x = cg_solve(&k, &rhs, cg)?;
        let mut values = vec![0.0; g.node_count()];
        for (node, v) in values.iter_mut().enumerate() {
            let xj = g.node_coords(node)[j];
            *v = match g.node_dof(node) {
                Some(d) => xj + x[d],
                None => xj,
            };
        }
        Ok(GridFunction::from_values(g, values))
    };
    Ok(DirichletCorrectors { epsilon: problem.epsilon, phi: [solve(0)?, solve(1)?] })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoercivityReport {
    pub epsilon: f64,
    pub lambda_eps_1: f64,
    pub lambda0_prime_1: f64,
    pub m_w_chi_w: f64,
    /// `λ′_0,1 + M(Wχ_w)`, the limit of `λ_ε,1`.
    pub limit: f64,
    pub coercive: bool,
}

/// Computes `λ_ε,1` of the discrete `L_ε`; never fails on indefinite operators.
pub fn coercivity_check(
    problem: &EpsProblem,
    lambda0_prime_1: f64,
    m_w_chi_w: f64,
    eig: &EigOptions,
) -> Result<CoercivityReport> {
    let k = problem.stiffness()?;
    let m = problem.mass();
    let opts = EigOptions { k: 1, fallback_shift: Some(problem.safe_shift()), ..*eig };
    let spec = eigs(&k, &m, &opts)?;
    let l = spec.eigenvalues[0];
    Ok(CoercivityReport {
        epsilon: problem.epsilon,
        lambda_eps_1: l,
        lambda0_prime_1,
        m_w_chi_w,
        limit: lambda0_prime_1 + m_w_chi_w,
        coercive: l > 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{MatrixPreset, PotentialPreset, SourcePreset};

    fn model(a: MatrixPreset, w: PotentialPreset, f: SourcePreset) -> CoefficientModel {
        CoefficientModel::new(a, w, f)
    }

    fn sine_sine(x: [f64; 2]) -> f64 {
        (PI * x[0]).sin() * (PI * x[1]).sin()
    }

    #[test]
    fn resolution_rule() {
        let m = model(MatrixPreset::Identity, PotentialPreset::Zero, SourcePreset::One);
        assert!(EpsProblem::new(m.clone(), 0.25, 64).is_ok());
        let err = EpsProblem::new(m.clone(), 0.25, 63).unwrap_err();
        assert!(err.to_string().contains("resolution rule"), "{err}");
        assert!(EpsProblem::new(m.clone(), 0.0, 64).is_err());
        assert!(EpsProblem::new(m, 1.5, 64).is_err());
    }

    #[test]
    fn laplace_eigenfunction_solution() {
        let n = 64;
        let m = model(MatrixPreset::Identity, PotentialPreset::Zero, SourcePreset::SineSine);
        let p = EpsProblem::new(m, 0.25, n).unwrap();
        let u = solve_eps(&p, sine_sine, &CgOptions::for_grid(n)).unwrap();
        let exact = GridFunction::interpolate(p.grid(), |x| sine_sine(x) / (2.0 * PI * PI));
        let h = 1.0 / n as f64;
        assert!(u.sub(&exact).max_abs() <= h * h);
        let zero = solve_eps(&p, |_| 0.0, &CgOptions::for_grid(n)).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn epsilon_free_problem_is_bitwise_independent() {
        let m = model(MatrixPreset::Identity, PotentialPreset::Zero, SourcePreset::One);
        let cg = CgOptions::for_grid(128);
        let a = solve_eps(&EpsProblem::new(m.clone(), 0.25, 128).unwrap(), |_| 1.0, &cg).unwrap();
        let b = solve_eps(&EpsProblem::new(m, 0.125, 128).unwrap(), |_| 1.0, &cg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn homogenized_separable_oracle() {
        let n = 64;
        let g = DirichletGrid::new(n);
        let cg = CgOptions::for_grid(n);
        let h = 1.0 / n as f64;
        let u = solve_homogenized(&[[1.0, 0.0], [0.0, 1.0]], 0.0, g, sine_sine, None, &cg).unwrap();
        let exact = GridFunction::interpolate(g, |x| sine_sine(x) / (2.0 * PI * PI));
        assert!(u.sub(&exact).max_abs() <= h * h);

        let a_hat = [[3f64.sqrt(), 0.0], [0.0, 2.0]];
        let m = -1.0 / (8.0 * PI * PI);
        let u = solve_homogenized(&a_hat, m, g, sine_sine, None, &cg).unwrap();
        let denom = PI * PI * (3f64.sqrt() + 2.0) + m;
        let exact = GridFunction::interpolate(g, |x| sine_sine(x) / denom);
        assert!(u.sub(&exact).max_abs() <= h * h);

        let z = solve_homogenized(&a_hat, m, g, |_| 0.0, None, &cg).unwrap();
        assert_eq!(z.max_abs(), 0.0);
        assert!(matches!(
            solve_homogenized(&a_hat, -100.0, g, sine_sine, None, &cg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn identity_correctors_are_linear() {
        let m = model(MatrixPreset::Identity, PotentialPreset::Zero, SourcePreset::One);
        let p = EpsProblem::new(m, 0.25, 64).unwrap();
        let c = solve_dirichlet_correctors(&p, &CgOptions::for_grid(64)).unwrap();
        assert!(c.sup_deviation(0) <= 1e-12 && c.sup_deviation(1) <= 1e-12);
    }

    #[test]
    fn corrector_boundary_values_are_exact() {
        let m = model(MatrixPreset::SmoothIso, PotentialPreset::Zero, SourcePreset::One);
        let p = EpsProblem::new(m, 0.25, 64).unwrap();
        let c = solve_dirichlet_correctors(&p, &CgOptions::for_grid(64)).unwrap();
        let g = c.phi[0].grid();
        for node in 0..g.node_count() {
            if g.is_boundary_node(node) {
                for j in 0..2 {
                    assert_eq!(c.phi[j].values()[node], g.node_coords(node)[j]);
                }
            }
        }
        assert_eq!(c.deviation(1).boundary_max_abs(), 0.0);
        assert!(c.sup_deviation(0) > 1e-4);
    }

    #[test]
    fn assembled_energy_matches_quadrature() {
        let m = model(MatrixPreset::SmoothIso, PotentialPreset::SineMix, SourcePreset::One);
        let p = EpsProblem::new(m, 0.25, 64).unwrap();
        let k = p.stiffness().unwrap();
        let u = GridFunction::interpolate(p.grid(), |x| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]) * (1.0 + x[0]));
        let assembled = k.quadratic_form(&u.dofs());
        let direct = p.quadrature_energy(&u);
        assert!(((assembled - direct) / direct).abs() <= 1e-10);
    }

    #[test]
    fn coercivity_reports() {
        let eig = EigOptions::new(1);
        let free = model(MatrixPreset::SmoothIso, PotentialPreset::Zero, SourcePreset::One);
        let r = coercivity_check(&EpsProblem::new(free, 0.25, 64).unwrap(), 2.0 * PI * PI, 0.0, &eig).unwrap();
        assert!(r.coercive && r.lambda_eps_1 >= 2.0 * PI * PI / 3.0);

        let scaled = model(MatrixPreset::Identity, PotentialPreset::Sine1, SourcePreset::One).with_potential_scale(100.0);
        let r = coercivity_check(&EpsProblem::new(scaled.clone(), 1.0, 16).unwrap(), 2.0 * PI * PI, 0.0, &eig).unwrap();
        assert_eq!(r.coercive, r.lambda_eps_1 > 0.0);
        assert!(!r.coercive, "{r:?}");
        let err = solve_eps(&EpsProblem::new(scaled, 1.0, 16).unwrap(), |_| 1.0, &CgOptions::for_grid(16)).unwrap_err();
        assert!(matches!(err, Error::Coercivity { lambda_eps_1 } if lambda_eps_1 < 0.0), "{err}");
    }
}
