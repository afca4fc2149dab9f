//! Jacobi-preconditioned conjugate gradients, optionally restricted to the
//! mean-zero subspace for periodic problems.

use crate::error::{Error, Result};
use crate::fem::sparse::SparseOperator;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOptions {
    /// Project out the constant vector (pure periodic problems).
    pub deflate_constants: bool,
    /// Relative residual target `‖Ax − b‖ / ‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
}

impl CgOptions {
    /// Defaults for a grid with `n` cells per side.
    pub fn for_grid(n: usize) -> Self {
        Self { deflate_constants: false, tol: 1e-10, max_iter: 50 * n }
    }

    pub fn deflated(mut self) -> Self {
        self.deflate_constants = true;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

/// Iteration count and final relative residual of a successful solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Solves `op · x = rhs`.
pub fn cg_solve(op: &SparseOperator, rhs: &[f64], opts: &CgOptions) -> Result<Vec<f64>> {
    cg_solve_with_stats(op, rhs, opts).map(|(x, _)| x)
}

pub fn cg_solve_with_stats(
    op: &SparseOperator,
    rhs: &[f64],
    opts: &CgOptions,
) -> Result<(Vec<f64>, CgStats)> {
    let n = op.nrows();
    assert_eq!(rhs.len(), n);
    let mut r = rhs.to_vec();
    if opts.deflate_constants {
        remove_mean(&mut r);
    }
    let b_norm = dot(rhs, rhs).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok((x, CgStats { iterations: 0, relative_residual: 0.0 }));
    }
    let inv_diag: Vec<f64> = op
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let precondition = |r: &[f64], z: &mut Vec<f64>| {
        z.iter_mut().zip(r).zip(&inv_diag).for_each(|((z, r), d)| *z = r * d);
        if opts.deflate_constants {
            remove_mean(z);
        }
    };

    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = dot(&r, &r).sqrt() / b_norm;
    for it in 0..opts.max_iter {
        if res <= opts.tol {
            return Ok((x, CgStats { iterations: it, relative_residual: res }));
        }
        op.mul_vec_into(&p, &mut ap);
        if opts.deflate_constants {
            remove_mean(&mut ap);
        }
        let curvature = dot(&p, &ap);
        if curvature <= 0.0 {
            return Err(Error::Breakdown { iteration: it });
        }
        let alpha = rz / curvature;
        x.iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
        r.iter_mut().zip(&ap).for_each(|(r, a)| *r -= alpha * a);
        res = dot(&r, &r).sqrt() / b_norm;
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
    if res <= opts.tol {
        return Ok((x, CgStats { iterations: opts.max_iter, relative_residual: res }));
    }
    Err(Error::Solver { iterations: opts.max_iter, residual: res })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assembly::{assemble_load, assemble_stiffness};
    use crate::fem::grid::{Grid, PeriodicGrid};
    use std::f64::consts::PI;

    #[test]
    fn diagonal_system() {
        let d = [2.0, 4.0, 0.5, 10.0];
        let op = SparseOperator::diagonal_matrix(&d);
        let b = [1.0, -3.0, 2.0, 7.0];
        let x = cg_solve(&op, &b, &CgOptions::for_grid(4)).unwrap();
        for i in 0..4 {
            assert!((x[i] - b[i] / d[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let op = SparseOperator::identity(5);
        let x = cg_solve(&op, &[0.0; 5], &CgOptions::for_grid(5)).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn periodic_eigenfunction_solve() {
        // −Δu = sin 2πy₁ has the mean-zero solution sin(2πy₁)/(4π²).
        let n = 64;
        let g = PeriodicGrid::new(n);
        let k = assemble_stiffness(g, |_| [[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let rhs = assemble_load(g, |y| (2.0 * PI * y[0]).sin());
        let x = cg_solve(&k, &rhs, &CgOptions::for_grid(n).deflated()).unwrap();
        let grid = Grid::from(g);
        let mut err: f64 = 0.0;
        for (node, v) in x.iter().enumerate() {
            let y = grid.node_coords(node);
            err = err.max((v - (2.0 * PI * y[0]).sin() / (4.0 * PI * PI)).abs());
        }
        let h = 1.0 / n as f64;
        assert!(err <= 0.5 * h * h, "err {err}");
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        assert!(mean.abs() <= 1e-12);
    }

    #[test]
    fn non_convergence_reports_residual() {
        let g = PeriodicGrid::new(32);
        let k = assemble_stiffness(g, |_| [[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let rhs = assemble_load(g, |y| ((2.0 * PI * y[0]).sin() + (2.0 * PI * y[1]).cos()).exp());
        let opts = CgOptions { deflate_constants: true, tol: 1e-14, max_iter: 3 };
        match cg_solve(&k, &rhs, &opts) {
            Err(Error::Solver { iterations: 3, residual }) => assert!(residual > 1e-14),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn indefinite_operator_breaks_down() {
        let op = SparseOperator::diagonal_matrix(&[1.0, -1.0]);
        let err = cg_solve(&op, &[1.0, 1.0], &CgOptions::for_grid(2)).unwrap_err();
        assert!(matches!(err, Error::Breakdown { .. }));
    }
}
