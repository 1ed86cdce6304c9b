//! Uniform 1-D partitions, nodal bases, quadrature and piecewise-polynomial
//! fields.

mod field;
mod quadrature;

pub use field::{eval_field, PolyField, Side};
pub use quadrature::{adaptive_integrate, legendre_with_derivative, QuadratureRule};

use crate::{Error, Result};

/// Reference nodes on `[-1, 1]` for a degree-`p` nodal basis.
///
/// These are the `p + 1` Chebyshev-Gauss roots `cos((2k+1)π / (2(p+1)))`
/// stretched so that the outermost roots land on `±1`; neighbouring cells
/// therefore share their edge nodes.
pub fn chebyshev_nodes(p: usize) -> Vec<f64> {
    let m = (p + 1) as f64;
    let stretch = (std::f64::consts::PI / (2.0 * m)).cos();
    let mut nodes = vec![0.0; p + 1];
    for k in 0..=p / 2 {
        let root = ((2 * k + 1) as f64 * std::f64::consts::PI / (2.0 * m)).cos() / stretch;
        nodes[k] = -root;
        nodes[p - k] = root;
    }
    if p.is_multiple_of(2) {
        nodes[p / 2] = 0.0;
    }
    nodes[0] = -1.0;
    nodes[p] = 1.0;
    nodes
}

/// Cardinal (Lagrange) polynomials on a fixed node set.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangeBasis {
    nodes: Vec<f64>,
    denominators: Vec<f64>,
}

impl LagrangeBasis {
    pub fn new(nodes: Vec<f64>) -> Self {
        let denominators = (0..nodes.len())
            .map(|i| {
                nodes
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, &xj)| nodes[i] - xj)
                    .product()
            })
            .collect();
        Self {
            nodes,
            denominators,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// `φ_i(ξ)` and `dφ_i/dξ`.
    pub fn eval(&self, i: usize, xi: f64) -> (f64, f64) {
        let mut value = 1.0;
        let mut deriv = 0.0;
        for (j, &xj) in self.nodes.iter().enumerate() {
            if j == i {
                continue;
            }
            // product rule accumulated alongside the product itself
            deriv = deriv * (xi - xj) + value;
            value *= xi - xj;
        }
        (value / self.denominators[i], deriv / self.denominators[i])
    }

    /// Values of every basis function at `xi`.
    pub fn values(&self, xi: f64) -> Vec<f64> {
        (0..self.len()).map(|i| self.eval(i, xi).0).collect()
    }

    /// Reference derivatives of every basis function at `xi`.
    pub fn derivatives(&self, xi: f64) -> Vec<f64> {
        (0..self.len()).map(|i| self.eval(i, xi).1).collect()
    }
}

/// Uniform partition of `[left, right]` with a degree-`p` nodal basis per
/// cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    left: f64,
    right: f64,
    n_cells: usize,
    degree: usize,
    partition: Vec<f64>,
    basis: LagrangeBasis,
    /// `(1/2) ∫ φ_i dξ`: weights turning nodal values into the cell mean.
    mean_weights: Vec<f64>,
}

impl SpatialGrid {
    pub fn uniform(left: f64, right: f64, n_cells: usize, degree: usize) -> Result<Self> {
        if !(left.is_finite() && right.is_finite()) || right <= left {
            return Err(Error::InvalidGrid(format!(
                "degenerate interval [{left}, {right}]"
            )));
        }
        if n_cells == 0 {
            return Err(Error::InvalidGrid("n_cells must be at least 1".into()));
        }
        if degree == 0 {
            return Err(Error::InvalidGrid(
                "degree must be at least 1 (nodes sit on both cell edges)".into(),
            ));
        }
        let h = (right - left) / n_cells as f64;
        let mut partition: Vec<f64> = (0..=n_cells).map(|k| left + k as f64 * h).collect();
        partition[n_cells] = right;
        let basis = LagrangeBasis::new(chebyshev_nodes(degree));
        let rule = QuadratureRule::gauss_legendre(degree + 1)?;
        let mean_weights = (0..=degree)
            .map(|i| 0.5 * rule.integrate(-1.0, 1.0, |x| basis.eval(i, x).0))
            .collect();
        Ok(Self {
            left,
            right,
            n_cells,
            degree,
            partition,
            basis,
            mean_weights,
        })
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn right(&self) -> f64 {
        self.right
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn nodes_per_cell(&self) -> usize {
        self.degree + 1
    }

    pub fn partition(&self) -> &[f64] {
        &self.partition
    }

    pub fn basis(&self) -> &LagrangeBasis {
        &self.basis
    }

    pub fn mean_weights(&self) -> &[f64] {
        &self.mean_weights
    }

    /// Uniform cell width.
    pub fn dx(&self) -> f64 {
        (self.right - self.left) / self.n_cells as f64
    }

    pub fn cell_bounds(&self, k: usize) -> (f64, f64) {
        (self.partition[k], self.partition[k + 1])
    }

    pub fn to_reference(&self, k: usize, x: f64) -> f64 {
        let (a, b) = self.cell_bounds(k);
        (2.0 * x - a - b) / (b - a)
    }

    pub fn from_reference(&self, k: usize, xi: f64) -> f64 {
        let (a, b) = self.cell_bounds(k);
        0.5 * (a + b) + 0.5 * (b - a) * xi
    }

    /// Physical position of node `i` in cell `k`.
    pub fn node(&self, k: usize, i: usize) -> f64 {
        match i {
            0 => self.partition[k],
            i if i == self.degree => self.partition[k + 1],
            _ => self.from_reference(k, self.basis.nodes()[i]),
        }
    }

    /// All node positions, cell by cell.
    pub fn node_positions(&self) -> Vec<f64> {
        (0..self.n_cells)
            .flat_map(|k| (0..=self.degree).map(move |i| (k, i)))
            .map(|(k, i)| self.node(k, i))
            .collect()
    }

    /// Cell containing `x`; on an interior partition point `side` picks the
    /// cell to the left or to the right.
    pub fn locate(&self, x: f64, side: Side) -> Result<usize> {
        let h = self.dx();
        let tol = 1e-12 * (self.right - self.left);
        if !(x >= self.left - tol && x <= self.right + tol) {
            return Err(Error::OutOfDomain {
                x,
                lo: self.left,
                hi: self.right,
            });
        }
        let t = (x - self.left) / h;
        let nearest = t.round();
        let on_edge = (t - nearest).abs() * h <= tol;
        let k = if on_edge {
            let e = nearest as usize;
            match side {
                Side::Left if e > 0 => e - 1,
                _ => e,
            }
        } else {
            t.floor() as usize
        };
        Ok(k.min(self.n_cells - 1))
    }
}

/// `φ_i^k(x)` and `dφ_i^k/dx` for node `i` of cell `cell`.
pub fn lagrange_basis_eval(grid: &SpatialGrid, cell: usize, i: usize, x: f64) -> Result<(f64, f64)> {
    if cell >= grid.n_cells() {
        return Err(Error::param("cell", format!("{cell} >= {}", grid.n_cells())));
    }
    if i > grid.degree() {
        return Err(Error::param("i", format!("{i} > degree {}", grid.degree())));
    }
    let (a, b) = grid.cell_bounds(cell);
    let tol = 1e-12 * (b - a);
    if x < a - tol || x > b + tol {
        return Err(Error::OutOfDomain { x, lo: a, hi: b });
    }
    let (v, d) = grid.basis().eval(i, grid.to_reference(cell, x));
    Ok((v, d * 2.0 / (b - a)))
}

/// Convenience alias matching the uniform partition constructor.
pub fn build_grid(left: f64, right: f64, n_cells: usize, p: usize) -> Result<SpatialGrid> {
    SpatialGrid::uniform(left, right, n_cells, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn four_quadratic_cells() {
        let g = build_grid(0.0, 1.0, 4, 2).unwrap();
        assert_eq!(g.n_cells(), 4);
        assert_eq!(g.nodes_per_cell(), 3);
        assert_abs_diff_eq!(g.dx(), 0.25);
        for k in 0..4 {
            let (a, b) = g.cell_bounds(k);
            assert_abs_diff_eq!(b - a, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn single_linear_cell_has_edge_nodes() {
        let g = build_grid(0.0, 1.0, 1, 1).unwrap();
        assert_eq!(g.node_positions(), vec![0.0, 1.0]);
    }

    #[test]
    fn cubic_nodes_match_chebyshev_roots() {
        let g = build_grid(0.0, 2.0, 2, 3).unwrap();
        // Closed form: roots of T_4 stretched so the outer pair hits ±1.
        let m = 4.0;
        let root = |k: f64| (((2.0 * k + 1.0) * std::f64::consts::PI) / (2.0 * m)).cos();
        let expect: Vec<f64> = (0..4).rev().map(|k| root(k as f64) / root(0.0)).collect();
        for k in 0..2 {
            let (a, b) = g.cell_bounds(k);
            for i in 0..4 {
                let want = 0.5 * (a + b) + 0.5 * (b - a) * expect[i];
                assert_abs_diff_eq!(g.node(k, i), want, epsilon = 1e-14);
            }
            let spacing: Vec<f64> = (0..3).map(|i| g.node(k, i + 1) - g.node(k, i)).collect();
            assert_abs_diff_eq!(spacing[0], spacing[2], epsilon = 1e-14);
        }
        // shared edge between the two cells
        assert_eq!(g.node(0, 3), g.node(1, 0));
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(build_grid(0.0, 1.0, 0, 1).is_err());
        assert!(build_grid(0.0, 1.0, 3, 0).is_err());
        assert!(build_grid(1.0, 1.0, 3, 1).is_err());
        assert!(build_grid(2.0, 1.0, 3, 1).is_err());
    }

    #[test]
    fn cardinal_partition_of_unity_and_zero_derivative_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in 1..=4 {
            let g = build_grid(-1.0, 3.0, 3, p).unwrap();
            for k in 0..g.n_cells() {
                for i in 0..=p {
                    for j in 0..=p {
                        let (v, _) = lagrange_basis_eval(&g, k, i, g.node(k, j)).unwrap();
                        let want = if i == j { 1.0 } else { 0.0 };
                        assert_abs_diff_eq!(v, want, epsilon = 1e-12);
                    }
                }
                let (a, b) = g.cell_bounds(k);
                for _ in 0..100 {
                    let x = rng.random_range(a..b);
                    let (mut s, mut ds) = (0.0, 0.0);
                    for i in 0..=p {
                        let (v, d) = lagrange_basis_eval(&g, k, i, x).unwrap();
                        s += v;
                        ds += d;
                    }
                    assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
                    assert_abs_diff_eq!(ds, 0.0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn basis_eval_outside_cell_is_error() {
        let g = build_grid(0.0, 1.0, 4, 2).unwrap();
        assert!(lagrange_basis_eval(&g, 0, 0, 0.5).is_err());
        assert!(lagrange_basis_eval(&g, 1, 0, 0.3).is_ok());
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let g = build_grid(0.0, 1.0, 2, 3).unwrap();
        let x = 0.31;
        let h = 1e-6;
        for i in 0..4 {
            let (_, d) = lagrange_basis_eval(&g, 0, i, x).unwrap();
            let fd = (lagrange_basis_eval(&g, 0, i, x + h).unwrap().0
                - lagrange_basis_eval(&g, 0, i, x - h).unwrap().0)
                / (2.0 * h);
            assert_abs_diff_eq!(d, fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn locate_respects_side_on_interfaces() {
        let g = build_grid(0.0, 1.0, 4, 1).unwrap();
        assert_eq!(g.locate(0.25, Side::Left).unwrap(), 0);
        assert_eq!(g.locate(0.25, Side::Right).unwrap(), 1);
        assert_eq!(g.locate(0.0, Side::Left).unwrap(), 0);
        assert_eq!(g.locate(1.0, Side::Right).unwrap(), 3);
        assert_eq!(g.locate(0.6, Side::Right).unwrap(), 2);
        assert!(g.locate(1.1, Side::Left).is_err());
    }

    #[test]
    fn mean_weights_sum_to_one() {
        for p in 1..=4 {
            let g = build_grid(0.0, 1.0, 1, p).unwrap();
            assert_abs_diff_eq!(g.mean_weights().iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        }
    }
}
