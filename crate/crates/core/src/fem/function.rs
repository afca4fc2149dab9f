//! Nodal Q1 fields and the quantities measured on them: norms, recovered
//! gradients, boundary flux.

use crate::coefficients::Mat2;
use crate::error::{Error, Result};
use crate::fem::grid::{reference_shape, Grid, RefQuad};

/// Nodal values of a bilinear field.
///
/// On a Dirichlet grid the values cover every node of the closed square; fields
/// built from DOF vectors have a zero boundary trace, fields built by
/// interpolation carry whatever the interpolated function is on `∂Ω`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros<G: Into<Grid>>(grid: G) -> Self {
        let grid = grid.into();
        Self { values: vec![0.0; grid.node_count()], grid }
    }

    pub fn from_values<G: Into<Grid>>(grid: G, values: Vec<f64>) -> Self {
        let grid = grid.into();
        assert_eq!(values.len(), grid.node_count(), "one value per node");
        Self { grid, values }
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate<G, F>(grid: G, f: F) -> Self
    where
        G: Into<Grid>,
        F: Fn([f64; 2]) -> f64,
    {
        let grid = grid.into();
        let values = (0..grid.node_count()).map(|k| f(grid.node_coords(k))).collect();
        Self { grid, values }
    }

    /// Field with the given DOF values and zero on Dirichlet boundary nodes.
    pub fn from_dofs<G: Into<Grid>>(grid: G, dofs: &[f64]) -> Self {
        let grid = grid.into();
        assert_eq!(dofs.len(), grid.dof_count());
        let mut values = vec![0.0; grid.node_count()];
        for (d, v) in dofs.iter().enumerate() {
            values[grid.dof_node(d)] = *v;
        }
        Self { grid, values }
    }

    /// Values at the DOF-carrying nodes.
    pub fn dofs(&self) -> Vec<f64> {
        (0..self.grid.dof_count()).map(|d| self.values[self.grid.dof_node(d)]).collect()
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Largest `|u|` over boundary nodes (zero on periodic grids).
    pub fn boundary_max_abs(&self) -> f64 {
        (0..self.grid.node_count())
            .filter(|&k| self.grid.is_boundary_node(k))
            .fold(0.0f64, |m, k| m.max(self.values[k].abs()))
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        let values = self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect();
        Self { grid: self.grid, values }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| f(*v)).collect() }
    }

    pub fn sub(&self, other: &GridFunction) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    #[inline]
    pub fn cell_values(&self, ci: usize, cj: usize) -> [f64; 4] {
        self.grid.cell_nodes(ci, cj).map(|k| self.values[k])
    }

    /// Bilinear evaluation at a physical point. Periodic grids wrap `x` into
    /// the unit cell; Dirichlet grids clamp it to the closed square.
    pub fn value_at(&self, x: [f64; 2]) -> f64 {
        let n = self.grid.n();
        let locate = |t: f64| -> (usize, f64) {
            let s = if self.grid.is_periodic() {
                let w = t - t.floor();
                w * n as f64
            } else {
                t.clamp(0.0, 1.0) * n as f64
            };
            let c = (s.floor() as usize).min(n - 1);
            (c, s - c as f64)
        };
        let (ci, xi) = locate(x[0]);
        let (cj, eta) = locate(x[1]);
        let v = self.cell_values(ci, cj);
        (0..4).map(|a| v[a] * reference_shape(a, xi, eta).0).sum()
    }

    /// Field values at quadrature points, ordered `cell * 4 + q`.
    pub fn quadrature_values(&self) -> Vec<f64> {
        let rq = RefQuad::new();
        let mut out = Vec::with_capacity(4 * self.grid.cell_count());
        for cell in 0..self.grid.cell_count() {
            let (ci, cj) = self.grid.cell_ij(cell);
            let v = self.cell_values(ci, cj);
            for q in 0..4 {
                out.push((0..4).map(|a| v[a] * rq.shape[q][a]).sum());
            }
        }
        out
    }

    /// Element gradients at quadrature points, ordered `cell * 4 + q`.
    pub fn quadrature_gradients(&self) -> Vec<[f64; 2]> {
        let rq = RefQuad::new();
        let inv_h = 1.0 / self.grid.h();
        let mut out = Vec::with_capacity(4 * self.grid.cell_count());
        for cell in 0..self.grid.cell_count() {
            let (ci, cj) = self.grid.cell_ij(cell);
            let v = self.cell_values(ci, cj);
            for q in 0..4 {
                let mut g = [0.0; 2];
                for a in 0..4 {
                    g[0] += v[a] * rq.grad[q][a][0] * inv_h;
                    g[1] += v[a] * rq.grad[q][a][1] * inv_h;
                }
                out.push(g);
            }
        }
        out
    }

    /// `∫ u` divided by the domain area (which is 1).
    pub fn mean(&self) -> f64 {
        let w = self.grid.quadrature_weight();
        self.quadrature_values().iter().sum::<f64>() * w
    }
}

/// `(∫ u v)` by 2×2 Gauss quadrature (exact for Q1 products).
pub fn l2_inner(u: &GridFunction, v: &GridFunction) -> f64 {
    assert_eq!(u.grid, v.grid);
    let w = u.grid.quadrature_weight();
    u.quadrature_values().iter().zip(v.quadrature_values()).map(|(a, b)| a * b).sum::<f64>() * w
}

/// `(∫ u²)^{1/2}`
pub fn l2_norm(u: &GridFunction) -> f64 {
    l2_inner(u, u).max(0.0).sqrt()
}

/// `(∫ |∇u|²)^{1/2}`
pub fn h1_seminorm(u: &GridFunction) -> f64 {
    let w = u.grid.quadrature_weight();
    let s: f64 = u.quadrature_gradients().iter().map(|g| g[0] * g[0] + g[1] * g[1]).sum();
    (s * w).sqrt()
}

/// `∫ a ∇u·∇u + ∫ w u²`, computed pointwise from the field rather than through
/// an assembled matrix.
pub fn quadrature_energy(
    u: &GridFunction,
    a: impl Fn([f64; 2]) -> Mat2,
    w: impl Fn([f64; 2]) -> f64,
) -> f64 {
    let grid = u.grid;
    let pts = grid.quadrature_points();
    let vals = u.quadrature_values();
    let grads = u.quadrature_gradients();
    let mut s = 0.0;
    for ((x, v), g) in pts.iter().zip(&vals).zip(&grads) {
        let m = a(*x);
        let ag = [m[0][0] * g[0] + m[0][1] * g[1], m[1][0] * g[0] + m[1][1] * g[1]];
        s += ag[0] * g[0] + ag[1] * g[1] + w(*x) * v * v;
    }
    s * grid.quadrature_weight()
}

/// Nodal gradient obtained by averaging the cell-centre gradients of the
/// cells touching each node. Exact for globally linear fields.
pub fn recover_gradient(u: &GridFunction) -> (GridFunction, GridFunction) {
    let grid = u.grid;
    let inv_h = 1.0 / grid.h();
    let mut gx = vec![0.0; grid.node_count()];
    let mut gy = vec![0.0; grid.node_count()];
    let mut count = vec![0u32; grid.node_count()];
    for cell in 0..grid.cell_count() {
        let (ci, cj) = grid.cell_ij(cell);
        let v = u.cell_values(ci, cj);
        let dx = 0.5 * ((v[1] - v[0]) + (v[3] - v[2])) * inv_h;
        let dy = 0.5 * ((v[2] - v[0]) + (v[3] - v[1])) * inv_h;
        for node in grid.cell_nodes(ci, cj) {
            gx[node] += dx;
            gy[node] += dy;
            count[node] += 1;
        }
    }
    for k in 0..grid.node_count() {
        let c = count[k] as f64;
        gx[k] /= c;
        gy[k] /= c;
    }
    (GridFunction { grid, values: gx }, GridFunction { grid, values: gy })
}

/// `∫_{∂Ω} |∇u|² dσ`, using on each boundary edge the gradient of the adjacent
/// cell evaluated at the edge's two Gauss points.
pub fn boundary_flux(u: &GridFunction) -> Result<f64> {
    let Grid::Dirichlet(g) = u.grid else {
        return Err(Error::Usage("boundary flux needs a field on a Dirichlet grid".into()));
    };
    let inv_h = 1.0 / g.h();
    let half_edge = 0.5 * g.h();
    let mut flux = 0.0;
    for edge in g.boundary_edges() {
        let (ci, cj) = edge.cell;
        let v = u.cell_values(ci, cj);
        for p in edge.side.gauss_points() {
            let mut grad = [0.0; 2];
            for (a, va) in v.iter().enumerate() {
                let (_, gr) = reference_shape(a, p[0], p[1]);
                grad[0] += va * gr[0] * inv_h;
                grad[1] += va * gr[1] * inv_h;
            }
            flux += half_edge * (grad[0] * grad[0] + grad[1] * grad[1]);
        }
    }
    Ok(flux)
}
