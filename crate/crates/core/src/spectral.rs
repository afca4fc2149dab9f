//! Lowest Dirichlet eigenpairs of `K φ = λ M φ`, spectral cluster projections
//! and the tables built from pairs of spectra.
//!
//! The eigensolver grows a block Krylov space of the shift-inverted operator
//! `(K + σM)⁻¹ M` from a seeded random start block and extracts Ritz pairs of
//! `K` on it. The inverse is applied through a banded Cholesky factor, so each
//! block step costs one forward/back substitution sweep.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{BandCholesky, Grid, GridFunction, SparseOperator};

/// Which discrete operator a spectrum belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorTag {
    /// `−div(A(x/ε)∇) + ε⁻¹W(x/ε)`
    Eps,
    /// `−div(A(x/ε)∇)`
    EpsPrime,
    /// `−div(Â∇) + M(Wχ_w)`
    Hom,
    /// `−div(Â∇)`
    HomPrime,
    /// `Hom` with `Â`, `M(Wχ_w)` taken from a cell grid matching the
    /// domain grid's resolution of one period.
    HomMatched,
    HomPrimeMatched,
}

impl OperatorTag {
    pub const ALL: [OperatorTag; 6] =
        [Self::Eps, Self::EpsPrime, Self::Hom, Self::HomPrime, Self::HomMatched, Self::HomPrimeMatched];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Eps => "eps",
            Self::EpsPrime => "eps_prime",
            Self::Hom => "hom",
            Self::HomPrime => "hom_prime",
            Self::HomMatched => "hom_matched",
            Self::HomPrimeMatched => "hom_prime_matched",
        }
    }
}

impl std::fmt::Display for OperatorTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigOptions {
    pub k: usize,
    pub seed: u64,
    /// Target for `‖Kφ − λMφ‖ / (max(|λ|, 1) ‖Mφ‖)`.
    pub tol: f64,
    /// Shift used when `K` itself is not positive definite; must make
    /// `K + σM` positive definite.
    pub fallback_shift: Option<f64>,
    /// Cap on the Krylov basis size.
    pub max_basis: usize,
}

impl EigOptions {
    pub fn new(k: usize) -> Self {
        Self { k, seed: 0, tol: 1e-10, fallback_shift: None, max_basis: 400 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_fallback_shift(mut self, shift: f64) -> Self {
        self.fallback_shift = Some(shift);
        self
    }
}

/// Ascending eigenpairs; eigenvectors are DOF vectors normalized in the `M`
/// inner product.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    /// Relative residuals as defined for [`EigOptions::tol`].
    pub residuals: Vec<f64>,
    /// Shift `σ` used for the factorization.
    pub shift: f64,
    pub basis_size: usize,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenfunction(&self, grid: impl Into<Grid>, k: usize) -> GridFunction {
        GridFunction::from_dofs(grid, &self.eigenvectors[k])
    }

    /// `max_{ij} |⟨φ_i, φ_j⟩_M − δ_ij|`
    pub fn orthonormality_defect(&self, m: &SparseOperator) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.len() {
            let mi = m.mul_vec(&self.eigenvectors[i]);
            for j in 0..self.len() {
                let d = dot(&mi, &self.eigenvectors[j]) - if i == j { 1.0 } else { 0.0 };
                worst = worst.max(d.abs());
            }
        }
        worst
    }

    /// `μ_k = 1/λ_k`
    pub fn inverse_eigenvalues(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| 1.0 / l).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Relative residual `‖Kx − λMx‖ / (max(|λ|, 1) ‖Mx‖)`.
pub fn relative_residual(k: &SparseOperator, m: &SparseOperator, lambda: f64, x: &[f64]) -> f64 {
    let kx = k.mul_vec(x);
    let mx = m.mul_vec(x);
    let r: Vec<f64> = kx.iter().zip(&mx).map(|(a, b)| a - lambda * b).collect();
    norm(&r) / (lambda.abs().max(1.0) * norm(&mx))
}

/// `xᵀKx / xᵀMx`
pub fn rayleigh_quotient(k: &SparseOperator, m: &SparseOperator, x: &[f64]) -> f64 {
    k.quadratic_form(x) / m.quadratic_form(x)
}

/// Makes `v` M-orthogonal to every column of `basis` (two Gram–Schmidt passes),
/// then M-normalizes it. Returns `false` when nothing independent is left.
fn orthonormalize_against(v: &mut [f64], basis: &[Vec<f64>], m_basis: &[Vec<f64>], m: &SparseOperator) -> bool {
    let before = m.quadratic_form(v).max(0.0).sqrt();
    if before == 0.0 {
        return false;
    }
    for _ in 0..2 {
        for (q, mq) in basis.iter().zip(m_basis) {
            let c = dot(mq, v);
            v.iter_mut().zip(q).for_each(|(v, q)| *v -= c * q);
        }
    }
    let after = m.quadratic_form(v).max(0.0).sqrt();
    if after <= 1e-10 * before {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= after);
    true
}

/// Lowest `opts.k` eigenpairs of `K φ = λ M φ`.
pub fn eigs(k_op: &SparseOperator, m_op: &SparseOperator, opts: &EigOptions) -> Result<Spectrum> {
    let n = k_op.nrows();
    let want = opts.k;
    if want == 0 || want > 64 {
        return Err(Error::Usage(format!("eigenpair count must be in 1..=64, got {want}")));
    }
    if want > n {
        return Err(Error::Usage(format!("requested {want} eigenpairs of a {n}-dimensional problem")));
    }

    let (chol, shift) = match BandCholesky::factor(k_op) {
        Ok(c) => (c, 0.0),
        Err(first) => {
            let Some(s) = opts.fallback_shift else { return Err(first) };
            (BandCholesky::factor(&k_op.add_scaled(m_op, s))?, s)
        }
    };

    let block = want.clamp(2, 4).min(n);
    let max_basis = opts.max_basis.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut m_basis: Vec<Vec<f64>> = Vec::new();
    let mut k_basis: Vec<Vec<f64>> = Vec::new();
    let mut projected: Vec<Vec<f64>> = Vec::new();
    let mut frontier: Vec<Vec<f64>> = (0..block).map(|_| (0..n).map(|_| rng.gen::<f64>() - 0.5).collect()).collect();

    let mut best: Option<Spectrum> = None;
    loop {
        // operator application on the new block: (K + σM)⁻¹ M X
        let p = frontier.len();
        let mut packed = vec![0.0; n * p];
        for (c, v) in frontier.iter().enumerate() {
            let mv = m_op.mul_vec(v);
            for i in 0..n {
                packed[i * p + c] = mv[i];
            }
        }
        if !basis.is_empty() {
            chol.solve_many_in_place(&mut packed, p);
        } else {
            // the start block itself is the first basis block
            for (c, v) in frontier.iter().enumerate() {
                for i in 0..n {
                    packed[i * p + c] = v[i];
                }
            }
        }
        let mut added = 0;
        for c in 0..p {
            let mut v: Vec<f64> = (0..n).map(|i| packed[i * p + c]).collect();
            if basis.len() >= max_basis {
                break;
            }
            if orthonormalize_against(&mut v, &basis, &m_basis, m_op) {
                let kv = k_op.mul_vec(&v);
                // new row of the projected stiffness VᵀKV
                let row: Vec<f64> = basis.iter().chain(std::iter::once(&v)).map(|q| dot(q, &kv)).collect();
                projected.push(row);
                m_basis.push(m_op.mul_vec(&v));
                k_basis.push(kv);
                basis.push(v);
                added += 1;
            }
        }
        let exhausted = added == 0 || basis.len() >= max_basis;
        frontier = basis[basis.len() - added..].to_vec();

        if basis.len() >= want && (basis.len() >= 3 * block || exhausted) {
            let spec = rayleigh_ritz(&basis, &k_basis, &m_basis, &projected, want, shift);
            let converged = spec.residuals.iter().all(|r| *r <= opts.tol);
            best = Some(spec);
            if converged {
                break;
            }
        }
        if exhausted {
            let spec = best.expect("basis holds at least the requested count");
            if spec.residuals.iter().all(|r| *r <= opts.tol) {
                best = Some(spec);
                break;
            }
            return Err(Error::Spectral(format!(
                "no convergence with a {}-vector basis; residuals {:?}",
                basis.len(),
                spec.residuals
            )));
        }
    }
    Ok(best.expect("loop exits with a spectrum"))
}

fn rayleigh_ritz(
    basis: &[Vec<f64>],
    k_basis: &[Vec<f64>],
    m_basis: &[Vec<f64>],
    projected: &[Vec<f64>],
    want: usize,
    shift: f64,
) -> Spectrum {
    let m = basis.len();
    let n = basis[0].len();
    let kr = DMatrix::from_fn(m, m, |i, j| if j <= i { projected[i][j] } else { projected[j][i] });
    let eig = SymmetricEigen::new(kr);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut eigenvalues = Vec::with_capacity(want);
    let mut eigenvectors = Vec::with_capacity(want);
    let mut residuals = Vec::with_capacity(want);
    for &col in order.iter().take(want) {
        let lambda = eig.eigenvalues[col];
        let mut x = vec![0.0; n];
        let mut kx = vec![0.0; n];
        let mut mx = vec![0.0; n];
        for j in 0..m {
            let c = eig.eigenvectors[(j, col)];
            for i in 0..n {
                x[i] += c * basis[j][i];
                kx[i] += c * k_basis[j][i];
                mx[i] += c * m_basis[j][i];
            }
        }
        // sign convention: ⟨φ, 1⟩_M ≥ 0
        if mx.iter().sum::<f64>() < 0.0 {
            for v in x.iter_mut().chain(kx.iter_mut()).chain(mx.iter_mut()) {
                *v = -*v;
            }
        }
        let r: Vec<f64> = kx.iter().zip(&mx).map(|(a, b)| a - lambda * b).collect();
        residuals.push(norm(&r) / (lambda.abs().max(1.0) * norm(&mx)));
        eigenvalues.push(lambda);
        eigenvectors.push(x);
    }
    Spectrum { eigenvalues, eigenvectors, residuals, shift, basis_size: m }
}

/// One row of the eigenvalue gap table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GapRow {
    pub epsilon: f64,
    pub k: usize,
    pub lambda_eps: f64,
    pub lambda_0: f64,
    pub gap: f64,
    /// `|λ_ε,k − λ_0,k| / (ε λ_ε,k^{3/2})`
    pub normalized_const: f64,
}

/// Pairs two spectra by sorted index.
pub fn gap_table(epsilon: f64, spec_eps: &Spectrum, spec_hom: &Spectrum, k_max: usize) -> Vec<GapRow> {
    (0..k_max.min(spec_eps.len()).min(spec_hom.len()))
        .map(|i| {
            let (le, l0) = (spec_eps.eigenvalues[i], spec_hom.eigenvalues[i]);
            let gap = (le - l0).abs();
            GapRow { epsilon, k: i + 1, lambda_eps: le, lambda_0: l0, gap, normalized_const: gap / (epsilon * le.abs().powf(1.5)) }
        })
        .collect()
}

/// First-eigenvalue comparison at one `ε`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FirstEigRecord {
    pub epsilon: f64,
    pub lambda_eps_1: f64,
    pub lambda_eps_prime_1: f64,
    pub lambda0_prime_1: f64,
    pub m_w_chi_w: f64,
    /// `|λ_ε,1 − (λ′_ε,1 + M(Wχ_w))|`
    pub d7: f64,
    /// `|λ_ε,1 − (λ′_0,1 + M(Wχ_w))|`
    pub d8: f64,
}

pub fn first_eig_record(
    epsilon: f64,
    spec_eps: &Spectrum,
    spec_eps_prime: &Spectrum,
    lambda0_prime_1: f64,
    m_w_chi_w: f64,
) -> FirstEigRecord {
    let l = spec_eps.eigenvalues[0];
    let lp = spec_eps_prime.eigenvalues[0];
    FirstEigRecord {
        epsilon,
        lambda_eps_1: l,
        lambda_eps_prime_1: lp,
        lambda0_prime_1,
        m_w_chi_w,
        d7: (l - (lp + m_w_chi_w)).abs(),
        d8: (l - (lambda0_prime_1 + m_w_chi_w)).abs(),
    }
}

/// Spectral cluster projection of `f` onto eigenfunctions with
/// `√λ_k ∈ [√λ, √λ + 1)`.
#[derive(Clone, Debug)]
pub struct ClusterProjection {
    pub lambda: f64,
    pub members: Vec<usize>,
    /// `S(f)` as a DOF vector.
    pub projected: Vec<f64>,
    /// `R(f) = Σ (λ_k − λ)⟨φ_k, f⟩ φ_k`
    pub residual: Vec<f64>,
    /// The computed spectrum may not reach the top of the window.
    pub truncated: bool,
    pub f_l2: f64,
    pub projected_l2: f64,
    /// `‖∇S(f)‖ / (√λ ‖f‖)`
    pub gradient_constant: f64,
    /// `‖R(f)‖ / (√λ ‖f‖)`
    pub residual_constant: f64,
}

/// `stiffness` is used only for `‖∇S‖² = SᵀKS`, so it should be the plain
/// Laplacian of the grid.
pub fn cluster_projection(
    spec: &Spectrum,
    mass: &SparseOperator,
    laplacian: &SparseOperator,
    lambda: f64,
    f: &[f64],
) -> Result<ClusterProjection> {
    if !(lambda >= 1.0) {
        return Err(Error::Usage(format!("cluster window needs lambda >= 1, got {lambda}")));
    }
    let lo = lambda.sqrt();
    let hi = lo + 1.0;
    let members: Vec<usize> = spec
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, l)| **l >= 0.0 && l.sqrt() >= lo && l.sqrt() < hi)
        .map(|(i, _)| i)
        .collect();
    let top = spec.eigenvalues.last().copied().unwrap_or(f64::NEG_INFINITY);
    let truncated = top.max(0.0).sqrt() < hi;
    let mf = mass.mul_vec(f);
    let n = f.len();
    let mut projected = vec![0.0; n];
    let mut residual = vec![0.0; n];
    for &k in &members {
        let phi = &spec.eigenvectors[k];
        let c = dot(phi, &mf);
        let r = (spec.eigenvalues[k] - lambda) * c;
        for i in 0..n {
            projected[i] += c * phi[i];
            residual[i] += r * phi[i];
        }
    }
    let f_l2 = mass.quadratic_form(f).max(0.0).sqrt();
    let projected_l2 = mass.quadratic_form(&projected).max(0.0).sqrt();
    let scale = lambda.sqrt() * f_l2;
    let (gradient_constant, residual_constant) = if scale > 0.0 {
        (
            laplacian.quadratic_form(&projected).max(0.0).sqrt() / scale,
            mass.quadratic_form(&residual).max(0.0).sqrt() / scale,
        )
    } else {
        (0.0, 0.0)
    };
    Ok(ClusterProjection {
        lambda,
        members,
        projected,
        residual,
        truncated,
        f_l2,
        projected_l2,
        gradient_constant,
        residual_constant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_mass, assemble_stiffness, DirichletGrid};
    use std::f64::consts::PI;

    fn laplace(n: usize) -> (SparseOperator, SparseOperator) {
        let g = DirichletGrid::new(n);
        (assemble_stiffness(g, |_| [[1.0, 0.0], [0.0, 1.0]]).unwrap(), assemble_mass(g))
    }

    #[test]
    fn square_laplacian_spectrum() {
        let (k, m) = laplace(32);
        let spec = eigs(&k, &m, &EigOptions::new(5)).unwrap();
        let exact = [2.0, 5.0, 5.0, 8.0, 10.0].map(|v| v * PI * PI);
        for i in 0..5 {
            assert!((spec.eigenvalues[i] / exact[i] - 1.0).abs() < 0.02, "{:?}", spec.eigenvalues);
            assert!(spec.residuals[i] <= 1e-10);
        }
        assert!(spec.orthonormality_defect(&m) <= 1e-8);
        for w in spec.eigenvalues.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn shift_moves_every_eigenvalue() {
        let (k, m) = laplace(16);
        let a = eigs(&k, &m, &EigOptions::new(5)).unwrap();
        let b = eigs(&k.add_scaled(&m, 7.5), &m, &EigOptions::new(5)).unwrap();
        for i in 0..5 {
            assert!((b.eigenvalues[i] - a.eigenvalues[i] - 7.5).abs() <= 1e-9);
        }
    }

    #[test]
    fn indefinite_operator_needs_shift() {
        let (k, m) = laplace(16);
        let shifted = k.add_scaled(&m, -30.0);
        assert!(eigs(&shifted, &m, &EigOptions::new(3)).is_err());
        let spec = eigs(&shifted, &m, &EigOptions::new(3).with_fallback_shift(31.0)).unwrap();
        assert!(spec.eigenvalues[0] < 0.0);
        let plain = eigs(&k, &m, &EigOptions::new(3)).unwrap();
        assert!((spec.eigenvalues[0] - (plain.eigenvalues[0] - 30.0)).abs() <= 1e-8);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let (k, m) = laplace(16);
        let a = eigs(&k, &m, &EigOptions::new(4).with_seed(9)).unwrap();
        let b = eigs(&k, &m, &EigOptions::new(4).with_seed(9)).unwrap();
        assert_eq!(a.eigenvalues, b.eigenvalues);
        assert_eq!(a.eigenvectors, b.eigenvectors);
    }

    #[test]
    fn rayleigh_quotients_bound_lowest_eigenvalue() {
        let (k, m) = laplace(16);
        let spec = eigs(&k, &m, &EigOptions::new(1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x: Vec<f64> = (0..k.nrows()).map(|_| rng.gen::<f64>() - 0.5).collect();
            assert!(rayleigh_quotient(&k, &m, &x) >= spec.eigenvalues[0] - 1e-9);
        }
        let mu = spec.inverse_eigenvalues();
        assert!((mu[0] * spec.eigenvalues[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cluster_projection_algebra() {
        let (k, m) = laplace(24);
        let spec = eigs(&k, &m, &EigOptions::new(6)).unwrap();
        // single-member window
        let p = cluster_projection(&spec, &m, &k, spec.eigenvalues[0], &spec.eigenvectors[0]).unwrap();
        assert_eq!(p.members, vec![0]);
        assert!(!p.truncated);
        for (a, b) in p.projected.iter().zip(&spec.eigenvectors[0]) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(m.quadratic_form(&p.residual).sqrt() < 1e-12);

        // degenerate pair λ₂ = λ₃
        let lam = spec.eigenvalues[1];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut f: Vec<f64> = (0..k.nrows()).map(|_| rng.gen::<f64>() - 0.5).collect();
        let s = m.quadratic_form(&f).sqrt();
        f.iter_mut().for_each(|v| *v /= s);
        let p = cluster_projection(&spec, &m, &k, lam, &f).unwrap();
        assert_eq!(p.members, vec![1, 2]);
        assert!(p.projected_l2 <= 1.0 + 1e-12);
        let pp = cluster_projection(&spec, &m, &k, lam, &p.projected).unwrap();
        let diff = pp.projected.iter().zip(&p.projected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-10, "{diff}");

        // orthogonal input
        let p = cluster_projection(&spec, &m, &k, lam, &spec.eigenvectors[0]).unwrap();
        assert!(p.projected_l2 <= 1e-10);
        assert!(cluster_projection(&spec, &m, &k, 0.5, &f).is_err());
    }

    #[test]
    fn gap_and_first_eig_tables() {
        let (k, m) = laplace(16);
        let a = eigs(&k, &m, &EigOptions::new(3)).unwrap();
        let rows = gap_table(0.25, &a, &a, 3);
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.gap == 0.0 && r.normalized_const == 0.0));
        let rec = first_eig_record(0.25, &a, &a, a.eigenvalues[0], 0.0);
        assert_eq!(rec.d7, 0.0);
        assert_eq!(rec.d8, 0.0);
    }
}
