//! Q1 assembly of stiffness, mass, weighted-mass and load forms with 2×2 Gauss
//! quadrature. Samplers are evaluated at physical quadrature points; callers
//! that need `A(x/ε)` pass a closure doing the rescaling.

use crate::coefficients::Mat2;
use crate::error::{Error, Result};
use crate::fem::grid::{Grid, RefQuad, QUAD_WEIGHT};
use crate::fem::sparse::SparseOperator;

/// Loops over cells, asking `local` for the 4×4 element matrix given the
/// physical quadrature points, and scatters it onto the grid DOFs.
fn assemble_cells<F>(grid: Grid, mut local: F) -> Result<SparseOperator>
where
    F: FnMut(&[[f64; 2]; 4]) -> Option<[[f64; 4]; 4]>,
{
    let rq = RefQuad::new();
    let h = grid.h();
    let mut triplets = Vec::with_capacity(16 * grid.cell_count());
    for cell in 0..grid.cell_count() {
        let (ci, cj) = grid.cell_ij(cell);
        let o = grid.cell_origin(ci, cj);
        let pts = rq.points.map(|p| [o[0] + p[0] * h, o[1] + p[1] * h]);
        let ke = local(&pts).ok_or(Error::Assembly { cell })?;
        let dofs = grid.cell_dofs(ci, cj);
        for a in 0..4 {
            let Some(ra) = dofs[a] else { continue };
            for b in 0..4 {
                let Some(cb) = dofs[b] else { continue };
                triplets.push((ra, cb, ke[a][b]));
            }
        }
    }
    Ok(SparseOperator::from_triplets(grid.dof_count(), triplets))
}

/// `∫ A ∇u·∇v` over the grid's domain.
pub fn assemble_stiffness<G, F>(grid: G, a: F) -> Result<SparseOperator>
where
    G: Into<Grid>,
    F: Fn([f64; 2]) -> Mat2,
{
    let rq = RefQuad::new();
    assemble_cells(grid.into(), |pts| {
        let mut ke = [[0.0; 4]; 4];
        for (q, x) in pts.iter().enumerate() {
            let m = a(*x);
            if m.iter().flatten().any(|v| !v.is_finite()) {
                return None;
            }
            // In 2-D the h² of the weight cancels the 1/h² of the two gradients.
            for (ai, ga) in rq.grad[q].iter().enumerate() {
                let ag = [m[0][0] * ga[0] + m[0][1] * ga[1], m[1][0] * ga[0] + m[1][1] * ga[1]];
                for (bi, gb) in rq.grad[q].iter().enumerate() {
                    ke[bi][ai] += QUAD_WEIGHT * (ag[0] * gb[0] + ag[1] * gb[1]);
                }
            }
        }
        Some(ke)
    })
}

/// `∫ w u v` over the grid's domain.
pub fn assemble_weighted_mass<G, F>(grid: G, w: F) -> Result<SparseOperator>
where
    G: Into<Grid>,
    F: Fn([f64; 2]) -> f64,
{
    let grid = grid.into();
    let rq = RefQuad::new();
    let wq = grid.quadrature_weight();
    assemble_cells(grid, |pts| {
        let mut me = [[0.0; 4]; 4];
        for (q, x) in pts.iter().enumerate() {
            let s = w(*x);
            if !s.is_finite() {
                return None;
            }
            for a in 0..4 {
                for b in 0..4 {
                    me[a][b] += wq * s * rq.shape[q][a] * rq.shape[q][b];
                }
            }
        }
        Some(me)
    })
}

/// `∫ u v`.
pub fn assemble_mass<G: Into<Grid>>(grid: G) -> SparseOperator {
    assemble_weighted_mass(grid, |_| 1.0).expect("unit weight is finite")
}

/// `F_i = ∫ g φ_i` from values of `g` at the quadrature points (`cell * 4 + q`).
pub fn load_from_quadrature(grid: Grid, values: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), 4 * grid.cell_count());
    let rq = RefQuad::new();
    let wq = grid.quadrature_weight();
    let mut rhs = vec![0.0; grid.dof_count()];
    for cell in 0..grid.cell_count() {
        let (ci, cj) = grid.cell_ij(cell);
        let dofs = grid.cell_dofs(ci, cj);
        for q in 0..4 {
            let g = values[4 * cell + q];
            for a in 0..4 {
                if let Some(d) = dofs[a] {
                    rhs[d] += wq * g * rq.shape[q][a];
                }
            }
        }
    }
    rhs
}

/// `F_i = ∫ g·∇φ_i` from vector values at the quadrature points.
pub fn gradient_load_from_quadrature(grid: Grid, values: &[[f64; 2]]) -> Vec<f64> {
    assert_eq!(values.len(), 4 * grid.cell_count());
    let rq = RefQuad::new();
    // weight h²/4 times the 1/h of the physical gradient
    let scale = QUAD_WEIGHT * grid.h();
    let mut rhs = vec![0.0; grid.dof_count()];
    for cell in 0..grid.cell_count() {
        let (ci, cj) = grid.cell_ij(cell);
        let dofs = grid.cell_dofs(ci, cj);
        for q in 0..4 {
            let g = values[4 * cell + q];
            for a in 0..4 {
                if let Some(d) = dofs[a] {
                    let ga = rq.grad[q][a];
                    rhs[d] += scale * (g[0] * ga[0] + g[1] * ga[1]);
                }
            }
        }
    }
    rhs
}

/// `F_i = ∫ f φ_i` for a pointwise source.
pub fn assemble_load<G, F>(grid: G, f: F) -> Vec<f64>
where
    G: Into<Grid>,
    F: Fn([f64; 2]) -> f64,
{
    let grid = grid.into();
    let values: Vec<f64> = grid.quadrature_points().into_iter().map(f).collect();
    load_from_quadrature(grid, &values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::grid::{DirichletGrid, PeriodicGrid};

    const I2: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

    #[test]
    fn single_interior_dof_stencil() {
        // Independent check: ∫∇φ·∇φ for the hat at the centre of a 2×2 mesh,
        // integrated with a fine midpoint rule over its four cells.
        let m = 400;
        let mut s = 0.0;
        for j in 0..m {
            for i in 0..m {
                let (x, y) = ((i as f64 + 0.5) / m as f64, (j as f64 + 0.5) / m as f64);
                let (hx, dhx) = (1.0 - (2.0 * x - 1.0).abs(), -2.0 * (2.0 * x - 1.0).signum());
                let (hy, dhy) = (1.0 - (2.0 * y - 1.0).abs(), -2.0 * (2.0 * y - 1.0).signum());
                s += ((dhx * hy).powi(2) + (hx * dhy).powi(2)) / (m * m) as f64;
            }
        }
        assert!((s - 8.0 / 3.0).abs() < 1e-3);

        let k = assemble_stiffness(DirichletGrid::new(2), |_| I2).unwrap();
        assert_eq!(k.nrows(), 1);
        assert!((k.get(0, 0) - 8.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn periodic_laplacian_annihilates_constants() {
        let k = assemble_stiffness(PeriodicGrid::new(16), |_| I2).unwrap();
        let y = k.mul_vec(&vec![1.0; k.nrows()]);
        assert!(y.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn stiffness_linear_in_coefficient() {
        let g = DirichletGrid::new(9);
        let a = |x: [f64; 2]| [[2.0 + x[0], 0.3], [0.3, 1.5 + x[1]]];
        let k1 = assemble_stiffness(g, a).unwrap();
        let k2 = assemble_stiffness(g, |x| a(x).map(|r| r.map(|v| 2.0 * v))).unwrap();
        assert_eq!(k1.scaled(2.0), k2);
        assert!(k1.symmetry_defect() <= 1e-13 * k1.max_abs());
    }

    #[test]
    fn non_finite_coefficient_reports_cell() {
        let err = assemble_stiffness(PeriodicGrid::new(4), |x| {
            if x[0] > 0.5 && x[1] > 0.75 {
                [[f64::NAN, 0.0], [0.0, 1.0]]
            } else {
                I2
            }
        })
        .unwrap_err();
        assert!(matches!(err, Error::Assembly { cell: 14 }), "{err}");
    }

    #[test]
    fn mass_measures_domain() {
        for n in [4, 16, 33] {
            let m = assemble_mass(PeriodicGrid::new(n));
            assert!((m.sum_entries() - 1.0).abs() < 1e-12);
        }
        let m = assemble_mass(PeriodicGrid::new(8));
        let wm = assemble_weighted_mass(PeriodicGrid::new(8), |_| 1.0).unwrap();
        assert_eq!(m, wm);
    }

    #[test]
    fn weighted_mass_of_mean_zero_function() {
        let g = PeriodicGrid::new(64);
        let wm = assemble_weighted_mass(g, |y| (2.0 * std::f64::consts::PI * y[0]).sin()).unwrap();
        assert!(wm.sum_entries().abs() <= 1e-12);
    }
}
