//! Uniform structured grids on the periodic cell `Y = [0,1)²` and on `Ω = (0,1)²`.

/// Offset of the two Gauss points of the 2-point rule on `[0,1]`.
const GAUSS_OFFSET: f64 = 0.288_675_134_594_812_9; // 1/(2√3)

/// Gauss abscissae on the reference interval `[0,1]`.
pub const GAUSS_1D: [f64; 2] = [0.5 - GAUSS_OFFSET, 0.5 + GAUSS_OFFSET];

/// Reference quadrilateral data: bilinear shape functions evaluated at the
/// 2×2 Gauss points. Local node `a = ax + 2·ay` sits at `(ax, ay)`, quadrature
/// point `q = qx + 2·qy` at `(GAUSS_1D[qx], GAUSS_1D[qy])`. Each point carries
/// weight 1/4 of the cell area.
#[derive(Clone, Debug)]
pub struct RefQuad {
    pub points: [[f64; 2]; 4],
    /// `shape[q][a]`
    pub shape: [[f64; 4]; 4],
    /// reference-cell gradient `grad[q][a]`, multiply by `1/h` for physical
    pub grad: [[[f64; 2]; 4]; 4],
}

pub const QUAD_WEIGHT: f64 = 0.25;

impl RefQuad {
    pub fn new() -> Self {
        let mut points = [[0.0; 2]; 4];
        let mut shape = [[0.0; 4]; 4];
        let mut grad = [[[0.0; 2]; 4]; 4];
        for q in 0..4 {
            let (xi, eta) = (GAUSS_1D[q % 2], GAUSS_1D[q / 2]);
            points[q] = [xi, eta];
            for a in 0..4 {
                let (s, t) = reference_shape(a, xi, eta);
                shape[q][a] = s;
                grad[q][a] = t;
            }
        }
        Self { points, shape, grad }
    }
}

impl Default for RefQuad {
    fn default() -> Self {
        Self::new()
    }
}

/// Value and reference gradient of shape function `a` at `(xi, eta)`.
#[inline]
pub fn reference_shape(a: usize, xi: f64, eta: f64) -> (f64, [f64; 2]) {
    let (lx, dlx) = if a % 2 == 0 { (1.0 - xi, -1.0) } else { (xi, 1.0) };
    let (ly, dly) = if a / 2 == 0 { (1.0 - eta, -1.0) } else { (eta, 1.0) };
    (lx * ly, [dlx * ly, lx * dly])
}

/// Periodic grid with `n` cells per side; `n²` nodes, opposite faces identified.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PeriodicGrid {
    n: usize,
}

impl PeriodicGrid {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "periodic grid needs at least 2 cells per side");
        Self { n }
    }
}

/// Grid on the unit square with `n` cells per side and `(n+1)²` nodes, of which
/// the `(n-1)²` interior ones carry degrees of freedom.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DirichletGrid {
    n: usize,
}

impl DirichletGrid {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "Dirichlet grid needs at least 2 cells per side");
        Self { n }
    }

    /// DOF index of the interior node `(i, j)`, `1 ≤ i, j ≤ n-1`.
    #[inline]
    pub fn interior_dof(&self, i: usize, j: usize) -> usize {
        (i - 1) + (self.n - 1) * (j - 1)
    }

    /// All `4n` boundary edges, counter-clockwise starting at the origin.
    pub fn boundary_edges(&self) -> Vec<BoundaryEdge> {
        let n = self.n;
        let mut edges = Vec::with_capacity(4 * n);
        for c in 0..n {
            edges.push(BoundaryEdge { cell: (c, 0), side: Side::South });
        }
        for c in 0..n {
            edges.push(BoundaryEdge { cell: (n - 1, c), side: Side::East });
        }
        for c in (0..n).rev() {
            edges.push(BoundaryEdge { cell: (c, n - 1), side: Side::North });
        }
        for c in (0..n).rev() {
            edges.push(BoundaryEdge { cell: (0, c), side: Side::West });
        }
        edges
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    South,
    East,
    North,
    West,
}

impl Side {
    pub fn outward_normal(self) -> [f64; 2] {
        match self {
            Side::South => [0.0, -1.0],
            Side::East => [1.0, 0.0],
            Side::North => [0.0, 1.0],
            Side::West => [-1.0, 0.0],
        }
    }

    /// Reference coordinates of the two Gauss points on this side.
    pub fn gauss_points(self) -> [[f64; 2]; 2] {
        let [g0, g1] = GAUSS_1D;
        match self {
            Side::South => [[g0, 0.0], [g1, 0.0]],
            Side::East => [[1.0, g0], [1.0, g1]],
            Side::North => [[g0, 1.0], [g1, 1.0]],
            Side::West => [[0.0, g0], [0.0, g1]],
        }
    }
}

/// A cell side lying on `∂Ω`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub cell: (usize, usize),
    pub side: Side,
}

/// Either kind of grid. Both are uniform with spacing `h = 1/n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Grid {
    Periodic(PeriodicGrid),
    Dirichlet(DirichletGrid),
}

impl From<PeriodicGrid> for Grid {
    fn from(g: PeriodicGrid) -> Self {
        Grid::Periodic(g)
    }
}

impl From<DirichletGrid> for Grid {
    fn from(g: DirichletGrid) -> Self {
        Grid::Dirichlet(g)
    }
}

macro_rules! common_accessors {
    ($ty:ty) => {
        impl $ty {
            pub fn n(&self) -> usize {
                self.n
            }

            pub fn h(&self) -> f64 {
                1.0 / self.n as f64
            }
        }
    };
}

common_accessors!(PeriodicGrid);
common_accessors!(DirichletGrid);

impl Grid {
    pub fn n(&self) -> usize {
        match self {
            Grid::Periodic(g) => g.n,
            Grid::Dirichlet(g) => g.n,
        }
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n() as f64
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, Grid::Periodic(_))
    }

    /// Side length of the node lattice (`n` periodic, `n+1` Dirichlet).
    #[inline]
    pub fn nodes_per_side(&self) -> usize {
        match self {
            Grid::Periodic(g) => g.n,
            Grid::Dirichlet(g) => g.n + 1,
        }
    }

    pub fn node_count(&self) -> usize {
        let m = self.nodes_per_side();
        m * m
    }

    pub fn dof_count(&self) -> usize {
        match self {
            Grid::Periodic(g) => g.n * g.n,
            Grid::Dirichlet(g) => (g.n - 1) * (g.n - 1),
        }
    }

    pub fn cell_count(&self) -> usize {
        self.n() * self.n()
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        match self {
            Grid::Periodic(g) => (i % g.n) + g.n * (j % g.n),
            Grid::Dirichlet(g) => i + (g.n + 1) * j,
        }
    }

    /// Lattice coordinates `(i, j)` of a node.
    #[inline]
    pub fn node_ij(&self, node: usize) -> (usize, usize) {
        let m = self.nodes_per_side();
        (node % m, node / m)
    }

    #[inline]
    pub fn node_coords(&self, node: usize) -> [f64; 2] {
        let (i, j) = self.node_ij(node);
        let h = self.h();
        [i as f64 * h, j as f64 * h]
    }

    /// DOF carried by a node, `None` for Dirichlet boundary nodes.
    #[inline]
    pub fn node_dof(&self, node: usize) -> Option<usize> {
        match self {
            Grid::Periodic(_) => Some(node),
            Grid::Dirichlet(g) => {
                let (i, j) = self.node_ij(node);
                if i == 0 || j == 0 || i == g.n || j == g.n {
                    None
                } else {
                    Some(g.interior_dof(i, j))
                }
            }
        }
    }

    /// Node carrying a DOF.
    #[inline]
    pub fn dof_node(&self, dof: usize) -> usize {
        match self {
            Grid::Periodic(_) => dof,
            Grid::Dirichlet(g) => {
                let m = g.n - 1;
                let (i, j) = (dof % m + 1, dof / m + 1);
                i + (g.n + 1) * j
            }
        }
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        self.node_dof(node).is_none()
    }

    /// Global node indices of cell `(ci, cj)` in local order.
    #[inline]
    pub fn cell_nodes(&self, ci: usize, cj: usize) -> [usize; 4] {
        [
            self.node_index(ci, cj),
            self.node_index(ci + 1, cj),
            self.node_index(ci, cj + 1),
            self.node_index(ci + 1, cj + 1),
        ]
    }

    /// DOFs of cell `(ci, cj)` in local order.
    #[inline]
    pub fn cell_dofs(&self, ci: usize, cj: usize) -> [Option<usize>; 4] {
        self.cell_nodes(ci, cj).map(|node| self.node_dof(node))
    }

    #[inline]
    pub fn cell_ij(&self, cell: usize) -> (usize, usize) {
        (cell % self.n(), cell / self.n())
    }

    #[inline]
    pub fn cell_origin(&self, ci: usize, cj: usize) -> [f64; 2] {
        let h = self.h();
        [ci as f64 * h, cj as f64 * h]
    }

    /// Physical coordinates of every quadrature point, ordered `cell * 4 + q`.
    pub fn quadrature_points(&self) -> Vec<[f64; 2]> {
        let rq = RefQuad::new();
        let h = self.h();
        let mut pts = Vec::with_capacity(4 * self.cell_count());
        for cell in 0..self.cell_count() {
            let (ci, cj) = self.cell_ij(cell);
            let o = self.cell_origin(ci, cj);
            for p in &rq.points {
                pts.push([o[0] + p[0] * h, o[1] + p[1] * h]);
            }
        }
        pts
    }

    /// Weight of a single quadrature point.
    pub fn quadrature_weight(&self) -> f64 {
        QUAD_WEIGHT * self.h() * self.h()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_cells_identify_opposite_faces() {
        let g = Grid::Periodic(PeriodicGrid::new(8));
        for cell in 0..g.cell_count() {
            let (ci, cj) = g.cell_ij(cell);
            for d in g.cell_dofs(ci, cj) {
                assert!(d.unwrap() < 64);
            }
        }
        assert_eq!(g.cell_nodes(7, 7), [63, 56, 7, 0]);
    }

    #[test]
    fn quadrature_weights_sum_to_area() {
        for grid in [Grid::Periodic(PeriodicGrid::new(13)), Grid::Dirichlet(DirichletGrid::new(7))] {
            let total = grid.quadrature_points().len() as f64 * grid.quadrature_weight();
            assert!((total - 1.0).abs() <= 1e-14);
        }
    }

    #[test]
    fn boundary_edges_cover_perimeter() {
        let g = DirichletGrid::new(10);
        let edges = g.boundary_edges();
        assert_eq!(edges.len(), 40);
        let mut length = 0.0;
        for e in &edges {
            let nrm = e.side.outward_normal();
            assert_eq!(nrm[0].abs() + nrm[1].abs(), 1.0);
            // outward: the adjacent cell lies on the inner side
            let (ci, cj) = e.cell;
            match e.side {
                Side::South => assert_eq!(cj, 0),
                Side::North => assert_eq!(cj, 9),
                Side::West => assert_eq!(ci, 0),
                Side::East => assert_eq!(ci, 9),
            }
            length += 2.0 * 0.5 * g.h();
        }
        assert!((length - 4.0).abs() <= 1e-14);
    }

    #[test]
    fn dirichlet_dof_round_trip() {
        let g = Grid::Dirichlet(DirichletGrid::new(6));
        assert_eq!(g.dof_count(), 25);
        for dof in 0..g.dof_count() {
            assert_eq!(g.node_dof(g.dof_node(dof)), Some(dof));
        }
        let boundary = (0..g.node_count()).filter(|&k| g.is_boundary_node(k)).count();
        assert_eq!(boundary, 24);
    }

    #[test]
    fn shape_functions_partition_unity() {
        let rq = RefQuad::new();
        for q in 0..4 {
            let s: f64 = rq.shape[q].iter().sum();
            let gx: f64 = rq.grad[q].iter().map(|g| g[0]).sum();
            let gy: f64 = rq.grad[q].iter().map(|g| g[1]).sum();
            assert!((s - 1.0).abs() < 1e-15 && gx.abs() < 1e-15 && gy.abs() < 1e-15);
        }
    }
}
