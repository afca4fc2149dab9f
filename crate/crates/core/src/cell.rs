//! Periodic cell problems and the effective data derived from them.
//!
//! Weak forms solved on the periodic grid, all with zero-mean solutions:
//!
//! ```text
//! χ_k  :  ∫ A(∇χ_k + e_k)·∇v = 0
//! χ_w  :  ∫ A∇χ_w·∇v = −∫ W v                 (div(A∇χ_w) = W)
//! ψ    :  ∫ ∇ψ·∇v   = −∫ g v                  (Δψ = g)
//! ```
//!
//! with `g = a_ij ∂_j χ_w − W χ_i` for `ψ_{1,i}`, `g = M(Wχ_w) − Wχ_w` for
//! `ψ_2` and `g = W` for `ψ_3`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::coefficients::{CoefficientModel, Mat2};
use crate::error::{Error, Result};
use crate::fem::{
    assemble_stiffness, cg_solve, gradient_load_from_quadrature, load_from_quadrature,
    recover_gradient, CgOptions, Grid, GridFunction, PeriodicGrid, SparseOperator,
};

const I2: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

/// Largest `|mean W|` accepted before the `χ_w` problem is declared incompatible.
pub const MEAN_W_COMPAT_TOL: f64 = 1e-10;

/// Floor for the auxiliary-potential compatibility tolerance.
pub const AUX_COMPAT_FLOOR: f64 = 1e-10;

/// Cell solver settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellOptions {
    pub n: usize,
    pub cg: CgOptions,
    /// Samples `A` and `W` at `y + offset`, i.e. solves on a translated lattice.
    pub offset: [f64; 2],
}

impl CellOptions {
    pub fn new(n: usize) -> Self {
        Self { n, cg: CgOptions::for_grid(n).deflated().with_tol(1e-12), offset: [0.0, 0.0] }
    }
}

/// Samples `A` and `W` of a model at the quadrature points of a periodic grid.
struct CellSampler<'a> {
    model: &'a CoefficientModel,
    offset: [f64; 2],
}

impl CellSampler<'_> {
    fn a(&self, y: [f64; 2]) -> Mat2 {
        self.model.a([y[0] + self.offset[0], y[1] + self.offset[1]])
    }

    fn w(&self, y: [f64; 2]) -> f64 {
        self.model.w([y[0] + self.offset[0], y[1] + self.offset[1]])
    }

    fn a_at_quadrature(&self, grid: Grid) -> Vec<Mat2> {
        grid.quadrature_points().into_iter().map(|y| self.a(y)).collect()
    }

    fn w_at_quadrature(&self, grid: Grid) -> Vec<f64> {
        grid.quadrature_points().into_iter().map(|y| self.w(y)).collect()
    }
}

fn cell_stiffness(sampler: &CellSampler, grid: PeriodicGrid) -> Result<SparseOperator> {
    assemble_stiffness(grid, |y| sampler.a(y))
}

fn solve_chi_sampled(
    sampler: &CellSampler,
    grid: PeriodicGrid,
    cg: &CgOptions,
) -> Result<[GridFunction; 2]> {
    let g = Grid::from(grid);
    let k = cell_stiffness(sampler, grid)?;
    let a_q = sampler.a_at_quadrature(g);
    let solve = |dir: usize| -> Result<GridFunction> {
        let flux: Vec<[f64; 2]> = a_q.iter().map(|a| [-a[0][dir], -a[1][dir]]).collect();
        let rhs = gradient_load_from_quadrature(g, &flux);
        let x = cg_solve(&k, &rhs, cg)?;
        Ok(GridFunction::from_dofs(g, &x))
    };
    Ok([solve(0)?, solve(1)?])
}

/// Correctors `χ_1, χ_2` of the cell problem.
pub fn solve_chi(model: &CoefficientModel, grid: PeriodicGrid, cg: &CgOptions) -> Result<[GridFunction; 2]> {
    solve_chi_sampled(&CellSampler { model, offset: [0.0, 0.0] }, grid, cg)
}

fn effective_matrix_sampled(sampler: &CellSampler, chi: &[GridFunction; 2]) -> Mat2 {
    let g = chi[0].grid();
    let wq = g.quadrature_weight();
    let a_q = sampler.a_at_quadrature(g);
    let grads = [chi[0].quadrature_gradients(), chi[1].quadrature_gradients()];
    let mut a_hat = [[0.0; 2]; 2];
    for (q, a) in a_q.iter().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                let dchi = grads[j][q];
                a_hat[i][j] += wq * (a[i][j] + a[i][0] * dchi[0] + a[i][1] * dchi[1]);
            }
        }
    }
    a_hat
}

/// `Â_ij = ∫_Y a_ij + a_ik ∂_k χ_j`.
pub fn effective_matrix(model: &CoefficientModel, chi: &[GridFunction; 2]) -> Mat2 {
    effective_matrix_sampled(&CellSampler { model, offset: [0.0, 0.0] }, chi)
}

fn solve_chi_w_sampled(sampler: &CellSampler, grid: PeriodicGrid, cg: &CgOptions) -> Result<GridFunction> {
    let g = Grid::from(grid);
    let w_q = sampler.w_at_quadrature(g);
    let mean_w = w_q.iter().sum::<f64>() * g.quadrature_weight();
    if mean_w.abs() > MEAN_W_COMPAT_TOL {
        return Err(Error::Compatibility { what: "W (chi_w problem)".into(), mean: mean_w, tol: MEAN_W_COMPAT_TOL });
    }
    let k = cell_stiffness(sampler, grid)?;
    let neg_w: Vec<f64> = w_q.iter().map(|w| -w).collect();
    let rhs = load_from_quadrature(g, &neg_w);
    let x = cg_solve(&k, &rhs, cg)?;
    Ok(GridFunction::from_dofs(g, &x))
}

/// Potential corrector `χ_w` solving `div(A∇χ_w) = W`.
pub fn solve_chi_w(model: &CoefficientModel, grid: PeriodicGrid, cg: &CgOptions) -> Result<GridFunction> {
    solve_chi_w_sampled(&CellSampler { model, offset: [0.0, 0.0] }, grid, cg)
}

fn effective_potential_sampled(sampler: &CellSampler, chi_w: &GridFunction) -> f64 {
    let g = chi_w.grid();
    let w_q = sampler.w_at_quadrature(g);
    chi_w.quadrature_values().iter().zip(&w_q).map(|(c, w)| c * w).sum::<f64>() * g.quadrature_weight()
}

/// `M(Wχ_w) = ∫_Y W χ_w`.
pub fn effective_potential(model: &CoefficientModel, chi_w: &GridFunction) -> f64 {
    effective_potential_sampled(&CellSampler { model, offset: [0.0, 0.0] }, chi_w)
}

/// `∫_Y A∇χ_w·∇χ_w`, the other side of `M(Wχ_w) = −∫ A∇χ_w·∇χ_w`.
pub fn chi_w_energy(model: &CoefficientModel, chi_w: &GridFunction) -> f64 {
    let g = chi_w.grid();
    let grads = chi_w.quadrature_gradients();
    g.quadrature_points()
        .iter()
        .zip(&grads)
        .map(|(y, d)| {
            let a = model.a(*y);
            d[0] * (a[0][0] * d[0] + a[0][1] * d[1]) + d[1] * (a[1][0] * d[0] + a[1][1] * d[1])
        })
        .sum::<f64>()
        * g.quadrature_weight()
}

/// Flux correctors `b_ij = Â_ij − a_ij − a_ik ∂_k χ_j` at quadrature points.
#[derive(Clone, Debug)]
pub struct FluxCorrectors {
    grid: PeriodicGrid,
    /// `values[i][j][cell * 4 + q]`
    values: [[Vec<f64>; 2]; 2],
}

impl FluxCorrectors {
    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn values(&self, i: usize, j: usize) -> &[f64] {
        &self.values[i][j]
    }

    pub fn mean(&self, i: usize, j: usize) -> f64 {
        let g = Grid::from(self.grid);
        self.values[i][j].iter().sum::<f64>() * g.quadrature_weight()
    }

    pub fn max_abs(&self, i: usize, j: usize) -> f64 {
        self.values[i][j].iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Largest `|cell average of b_ij|`.
    pub fn max_abs_cell_average(&self, i: usize, j: usize) -> f64 {
        self.values[i][j].chunks(4).map(|c| (c.iter().sum::<f64>() / 4.0).abs()).fold(0.0, f64::max)
    }

    /// `max_v |∫ b_ij ∂_i v| / ‖∇v‖` over the grid's hat functions `v`.
    pub fn weak_divergence_residual(&self, j: usize) -> f64 {
        let g = Grid::from(self.grid);
        let field: Vec<[f64; 2]> =
            self.values[0][j].iter().zip(&self.values[1][j]).map(|(b0, b1)| [*b0, *b1]).collect();
        let r = gradient_load_from_quadrature(g, &field);
        // every hat function on a uniform grid has ‖∇φ‖² = 8/3
        let hat_norm = (8.0f64 / 3.0).sqrt();
        r.iter().fold(0.0f64, |m, v| m.max(v.abs())) / hat_norm
    }

    /// `max_v |∫ b_ij ∂_i v| / ‖∇v‖` over the trigonometric test functions
    /// `sin, cos (2π(p y₁ + q y₂))` with `0 < |p| + |q| ≤ 4`.
    pub fn smooth_divergence_residual(&self, j: usize) -> f64 {
        let g = Grid::from(self.grid);
        let pts = g.quadrature_points();
        let wq = g.quadrature_weight();
        let mut worst: f64 = 0.0;
        for p in -2i32..=2 {
            for q in -2i32..=2 {
                if (p, q) == (0, 0) {
                    continue;
                }
                let k = [2.0 * PI * p as f64, 2.0 * PI * q as f64];
                let grad_norm = (0.5 * (k[0] * k[0] + k[1] * k[1])).sqrt();
                for phase in [0.0, 0.5 * PI] {
                    let mut s = 0.0;
                    for (idx, y) in pts.iter().enumerate() {
                        let d = (k[0] * y[0] + k[1] * y[1] + phase).cos();
                        s += self.values[0][j][idx] * k[0] * d + self.values[1][j][idx] * k[1] * d;
                    }
                    worst = worst.max((s * wq).abs() / grad_norm);
                }
            }
        }
        worst
    }
}

fn flux_correctors_sampled(sampler: &CellSampler, chi: &[GridFunction; 2], a_hat: &Mat2) -> FluxCorrectors {
    let g = chi[0].grid();
    let Grid::Periodic(grid) = g else { unreachable!("cell correctors live on a periodic grid") };
    let a_q = sampler.a_at_quadrature(g);
    let grads = [chi[0].quadrature_gradients(), chi[1].quadrature_gradients()];
    let mut values: [[Vec<f64>; 2]; 2] = Default::default();
    for i in 0..2 {
        for j in 0..2 {
            values[i][j] = a_q
                .iter()
                .zip(&grads[j])
                .map(|(a, d)| a_hat[i][j] - a[i][j] - a[i][0] * d[0] - a[i][1] * d[1])
                .collect();
        }
    }
    FluxCorrectors { grid, values }
}

pub fn flux_correctors(model: &CoefficientModel, chi: &[GridFunction; 2], a_hat: &Mat2) -> FluxCorrectors {
    flux_correctors_sampled(&CellSampler { model, offset: [0.0, 0.0] }, chi, a_hat)
}

/// Both sides of `∫ a_ij ∂_j χ_w = ∫ χ_i W`, evaluated two ways.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IdentityDefects {
    /// Left side from the element gradients of `χ_w`: the discrete identity
    /// holds up to solver tolerance.
    pub galerkin: [f64; 2],
    /// Left side from the nodal recovered gradient of `χ_w`: an independent
    /// route whose defect is the discretization error.
    pub consistency: [f64; 2],
}

impl IdentityDefects {
    pub fn max_galerkin(&self) -> f64 {
        self.galerkin[0].abs().max(self.galerkin[1].abs())
    }

    pub fn max_consistency(&self) -> f64 {
        self.consistency[0].abs().max(self.consistency[1].abs())
    }
}

fn identity_defects_sampled(sampler: &CellSampler, chi: &[GridFunction; 2], chi_w: &GridFunction) -> IdentityDefects {
    let g = chi_w.grid();
    let wq = g.quadrature_weight();
    let a_q = sampler.a_at_quadrature(g);
    let w_q = sampler.w_at_quadrature(g);
    let dchi_w = chi_w.quadrature_gradients();
    let (rx, ry) = recover_gradient(chi_w);
    let (rx, ry) = (rx.quadrature_values(), ry.quadrature_values());
    let chi_q = [chi[0].quadrature_values(), chi[1].quadrature_values()];
    let mut galerkin = [0.0; 2];
    let mut consistency = [0.0; 2];
    for i in 0..2 {
        let mut lhs = 0.0;
        let mut lhs_rec = 0.0;
        let mut rhs = 0.0;
        for q in 0..a_q.len() {
            let a = a_q[q];
            lhs += a[i][0] * dchi_w[q][0] + a[i][1] * dchi_w[q][1];
            lhs_rec += a[i][0] * rx[q] + a[i][1] * ry[q];
            rhs += chi_q[i][q] * w_q[q];
        }
        galerkin[i] = (lhs - rhs) * wq;
        consistency[i] = (lhs_rec - rhs) * wq;
    }
    IdentityDefects { galerkin, consistency }
}

pub fn identity_defects(model: &CoefficientModel, chi: &[GridFunction; 2], chi_w: &GridFunction) -> IdentityDefects {
    identity_defects_sampled(&CellSampler { model, offset: [0.0, 0.0] }, chi, chi_w)
}

/// Zero-mean periodic auxiliary potentials.
#[derive(Clone, Debug)]
pub struct AuxPotentials {
    pub psi1: [GridFunction; 2],
    pub psi2: GridFunction,
    pub psi3: GridFunction,
    /// `|mean|` of the right-hand side of each problem, in the order
    /// `ψ_{1,1}, ψ_{1,2}, ψ_2, ψ_3`.
    pub rhs_means: [f64; 4],
}

#[allow(clippy::too_many_arguments)]
fn solve_aux_sampled(
    sampler: &CellSampler,
    chi: &[GridFunction; 2],
    chi_w: &GridFunction,
    m_w_chi_w: f64,
    compat_tol: f64,
    cg: &CgOptions,
) -> Result<AuxPotentials> {
    let g = chi_w.grid();
    let Grid::Periodic(grid) = g else { unreachable!("cell correctors live on a periodic grid") };
    let wq = g.quadrature_weight();
    let lap = assemble_stiffness(grid, |_| I2)?;
    let a_q = sampler.a_at_quadrature(g);
    let w_q = sampler.w_at_quadrature(g);
    let dchi_w = chi_w.quadrature_gradients();
    let chi_w_q = chi_w.quadrature_values();
    let chi_q = [chi[0].quadrature_values(), chi[1].quadrature_values()];

    let solve = |what: &str, rhs_q: Vec<f64>| -> Result<(GridFunction, f64)> {
        let mean = rhs_q.iter().sum::<f64>() * wq;
        if mean.abs() > compat_tol {
            return Err(Error::Compatibility { what: what.into(), mean, tol: compat_tol });
        }
        let neg: Vec<f64> = rhs_q.iter().map(|v| -v).collect();
        let rhs = load_from_quadrature(g, &neg);
        let x = cg_solve(&lap, &rhs, cg)?;
        Ok((GridFunction::from_dofs(g, &x), mean.abs()))
    };

    let psi1_rhs = |i: usize| -> Vec<f64> {
        (0..a_q.len())
            .map(|q| a_q[q][i][0] * dchi_w[q][0] + a_q[q][i][1] * dchi_w[q][1] - w_q[q] * chi_q[i][q])
            .collect()
    };
    let (p11, m11) = solve("psi_1,1", psi1_rhs(0))?;
    let (p12, m12) = solve("psi_1,2", psi1_rhs(1))?;
    let psi2_rhs = (0..a_q.len()).map(|q| m_w_chi_w - w_q[q] * chi_w_q[q]).collect();
    let (p2, m2) = solve("psi_2", psi2_rhs)?;
    let (p3, m3) = solve("psi_3", w_q.clone())?;
    Ok(AuxPotentials { psi1: [p11, p12], psi2: p2, psi3: p3, rhs_means: [m11, m12, m2, m3] })
}

/// Solves for `ψ_{1,i}`, `ψ_2`, `ψ_3` after checking that each right-hand side
/// has mean at most `compat_tol`.
pub fn solve_aux_potentials(
    model: &CoefficientModel,
    chi: &[GridFunction; 2],
    chi_w: &GridFunction,
    m_w_chi_w: f64,
    compat_tol: f64,
    cg: &CgOptions,
) -> Result<AuxPotentials> {
    solve_aux_sampled(&CellSampler { model, offset: [0.0, 0.0] }, chi, chi_w, m_w_chi_w, compat_tol, cg)
}

/// Self-checks recorded alongside a cell solution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CellChecks {
    /// `|M(Wχ_w) + ∫A∇χ_w·∇χ_w| / (1 + |M(Wχ_w)|)`
    pub potential_energy_residual: f64,
    pub identity: IdentityDefects,
    pub a_hat_asymmetry: f64,
    /// Largest `|mean|` of `χ_1, χ_2, χ_w, ψ_·`.
    pub max_corrector_mean: f64,
    /// Largest `|mean b_ij|`.
    pub max_flux_corrector_mean: f64,
}

/// Everything computed on the periodic cell.
#[derive(Clone, Debug)]
pub struct PeriodicCellSolution {
    pub grid: PeriodicGrid,
    pub chi: [GridFunction; 2],
    pub chi_w: GridFunction,
    pub a_hat: Mat2,
    pub m_w_chi_w: f64,
    pub flux: FluxCorrectors,
    pub aux: AuxPotentials,
    pub checks: CellChecks,
}

impl PeriodicCellSolution {
    /// `χ_w(y)` by bilinear interpolation, any `y ∈ ℝ²`.
    pub fn chi_w_at(&self, y: [f64; 2]) -> f64 {
        self.chi_w.value_at(y)
    }

    pub fn chi_at(&self, k: usize, y: [f64; 2]) -> f64 {
        self.chi[k].value_at(y)
    }

    /// Eigenvalues of `Â`, ascending.
    pub fn a_hat_eigenvalues(&self) -> [f64; 2] {
        sym2_eigenvalues(&self.a_hat)
    }
}

/// Eigenvalues of the symmetric part of a 2×2 matrix, ascending.
pub fn sym2_eigenvalues(m: &Mat2) -> [f64; 2] {
    let off = 0.5 * (m[0][1] + m[1][0]);
    let mid = 0.5 * (m[0][0] + m[1][1]);
    let rad = (0.25 * (m[0][0] - m[1][1]).powi(2) + off * off).sqrt();
    [mid - rad, mid + rad]
}

/// Runs every cell solve and the accompanying identity checks.
pub fn solve_cell(model: &CoefficientModel, opts: &CellOptions) -> Result<PeriodicCellSolution> {
    let grid = PeriodicGrid::new(opts.n);
    let sampler = CellSampler { model, offset: opts.offset };
    let chi = solve_chi_sampled(&sampler, grid, &opts.cg)?;
    let a_hat = effective_matrix_sampled(&sampler, &chi);
    let chi_w = solve_chi_w_sampled(&sampler, grid, &opts.cg)?;
    let m_w_chi_w = effective_potential_sampled(&sampler, &chi_w);
    let flux = flux_correctors_sampled(&sampler, &chi, &a_hat);
    let identity = identity_defects_sampled(&sampler, &chi, &chi_w);
    let compat_tol = (10.0 * identity.max_galerkin()).max(AUX_COMPAT_FLOOR);
    let aux = solve_aux_sampled(&sampler, &chi, &chi_w, m_w_chi_w, compat_tol, &opts.cg)?;

    let energy = if opts.offset == [0.0, 0.0] {
        chi_w_energy(model, &chi_w)
    } else {
        let shifted = |y: [f64; 2]| sampler.a(y);
        let g = chi_w.grid();
        chi_w
            .quadrature_gradients()
            .iter()
            .zip(g.quadrature_points())
            .map(|(d, y)| {
                let a = shifted(y);
                d[0] * (a[0][0] * d[0] + a[0][1] * d[1]) + d[1] * (a[1][0] * d[0] + a[1][1] * d[1])
            })
            .sum::<f64>()
            * g.quadrature_weight()
    };
    let means = [&chi[0], &chi[1], &chi_w, &aux.psi1[0], &aux.psi1[1], &aux.psi2, &aux.psi3]
        .iter()
        .map(|f| f.mean().abs())
        .fold(0.0f64, f64::max);
    let mut flux_mean: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            flux_mean = flux_mean.max(flux.mean(i, j).abs());
        }
    }
    let checks = CellChecks {
        potential_energy_residual: (m_w_chi_w + energy).abs() / (1.0 + m_w_chi_w.abs()),
        identity,
        a_hat_asymmetry: (a_hat[0][1] - a_hat[1][0]).abs(),
        max_corrector_mean: means,
        max_flux_corrector_mean: flux_mean,
    };
    Ok(PeriodicCellSolution { grid, chi, chi_w, a_hat, m_w_chi_w, flux, aux, checks })
}
