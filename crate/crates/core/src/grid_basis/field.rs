use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{QuadratureRule, SpatialGrid};
use crate::{Error, Result};

/// Which one-sided limit to take on an interior partition point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Limit from the left (value of the cell ending at the point).
    Left,
    /// Limit from the right (value of the cell starting at the point).
    Right,
}

/// Piecewise polynomial stored as nodal values, `p + 1` per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyField {
    grid: Arc<SpatialGrid>,
    coeffs: Vec<f64>,
}

impl PolyField {
    pub fn new(grid: Arc<SpatialGrid>, coeffs: Vec<f64>) -> Result<Self> {
        let want = grid.n_cells() * grid.nodes_per_cell();
        if coeffs.len() != want {
            return Err(Error::param(
                "coeffs",
                format!("expected {want} nodal values, got {}", coeffs.len()),
            ));
        }
        Ok(Self { grid, coeffs })
    }

    pub fn constant(grid: Arc<SpatialGrid>, value: f64) -> Self {
        let len = grid.n_cells() * grid.nodes_per_cell();
        Self {
            grid,
            coeffs: vec![value; len],
        }
    }

    pub fn zeros_like(other: &PolyField) -> Self {
        Self::constant(other.grid.clone(), 0.0)
    }

    /// Nodal interpolation of `f`.
    pub fn interpolate<F: Fn(f64) -> f64>(grid: Arc<SpatialGrid>, f: F) -> Self {
        let coeffs = grid.node_positions().into_iter().map(f).collect();
        Self { grid, coeffs }
    }

    /// Projection that matches `f` at each cell's left edge and is
    /// L2-orthogonal to polynomials of degree `p - 1` on the cell.
    ///
    /// For data prepared this way the auxiliary gradient recovered with
    /// right-sided traces is the L2 projection of `f'`.
    pub fn project_left_radau<F: Fn(f64) -> f64>(grid: Arc<SpatialGrid>, f: F) -> Result<Self> {
        let p = grid.degree();
        let np = p + 1;
        let rule = QuadratureRule::gauss_legendre(p + 4)?;
        let basis = grid.basis();
        let mut a = DMatrix::<f64>::zeros(np, np);
        for (row, m) in (0..p).enumerate() {
            for i in 0..np {
                a[(row, i)] = rule.integrate(-1.0, 1.0, |xi| basis.eval(i, xi).0 * xi.powi(m as i32));
            }
        }
        a[(p, 0)] = 1.0;
        let lu = a.lu();
        let mut coeffs = Vec::with_capacity(grid.n_cells() * np);
        for k in 0..grid.n_cells() {
            let mut rhs = DVector::<f64>::zeros(np);
            for m in 0..p {
                rhs[m] = rule.integrate(-1.0, 1.0, |xi| f(grid.from_reference(k, xi)) * xi.powi(m as i32));
            }
            rhs[p] = f(grid.cell_bounds(k).0);
            let sol = lu
                .solve(&rhs)
                .ok_or_else(|| Error::InvalidGrid("singular Radau projection system".into()))?;
            coeffs.extend(sol.iter());
        }
        Ok(Self { grid, coeffs })
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn cell(&self, k: usize) -> &[f64] {
        let np = self.grid.nodes_per_cell();
        &self.coeffs[k * np..(k + 1) * np]
    }

    pub fn cell_mut(&mut self, k: usize) -> &mut [f64] {
        let np = self.grid.nodes_per_cell();
        &mut self.coeffs[k * np..(k + 1) * np]
    }

    /// Value at the left edge of cell `k` (seen from inside the cell).
    pub fn left_trace(&self, k: usize) -> f64 {
        self.cell(k)[0]
    }

    /// Value at the right edge of cell `k` (seen from inside the cell).
    pub fn right_trace(&self, k: usize) -> f64 {
        self.cell(k)[self.grid.degree()]
    }

    pub fn cell_mean(&self, k: usize) -> f64 {
        self.cell(k)
            .iter()
            .zip(self.grid.mean_weights())
            .map(|(c, w)| c * w)
            .sum()
    }

    pub fn cell_means(&self) -> Vec<f64> {
        (0..self.grid.n_cells()).map(|k| self.cell_mean(k)).collect()
    }

    /// `∫ field dx` over the whole domain.
    pub fn integral(&self) -> f64 {
        let h = self.grid.dx();
        (0..self.grid.n_cells()).map(|k| self.cell_mean(k) * h).sum()
    }

    /// Value at reference coordinate `xi` of cell `k`.
    pub fn eval_in_cell(&self, k: usize, xi: f64) -> f64 {
        let basis = self.grid.basis();
        self.cell(k)
            .iter()
            .enumerate()
            .map(|(i, c)| c * basis.eval(i, xi).0)
            .sum()
    }

    /// Value at `x`; on interior partition points `side` chooses the trace.
    pub fn eval(&self, x: f64, side: Side) -> Result<f64> {
        let k = self.grid.locate(x, side)?;
        let xi = self.grid.to_reference(k, x).clamp(-1.0, 1.0);
        Ok(self.eval_in_cell(k, xi))
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &PolyField) {
        for (c, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *c += a * o;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for c in &mut self.coeffs {
            *c *= a;
        }
    }
}

/// Free-function form of [`PolyField::eval`].
pub fn eval_field(field: &PolyField, x: f64, side: Side) -> Result<f64> {
    field.eval(x, side)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_basis::build_grid;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize, p: usize) -> Arc<SpatialGrid> {
        Arc::new(build_grid(0.0, 1.0, n, p).unwrap())
    }

    #[test]
    fn constant_field_everywhere() {
        let f = PolyField::constant(grid(5, 2), 0.37);
        for x in [0.0, 0.1, 0.2, 0.55, 1.0] {
            assert_abs_diff_eq!(f.eval(x, Side::Left).unwrap(), 0.37, epsilon = 1e-15);
            assert_abs_diff_eq!(f.eval(x, Side::Right).unwrap(), 0.37, epsilon = 1e-15);
        }
    }

    #[test]
    fn reproduces_identity() {
        let f = PolyField::interpolate(grid(3, 1), |x| x);
        for x in [0.0, 0.05, 0.333, 0.9, 1.0] {
            assert_abs_diff_eq!(f.eval(x, Side::Right).unwrap(), x, epsilon = 1e-14);
        }
    }

    #[test]
    fn random_polynomials_match_monomial_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in 1..=4 {
            let g = grid(7, p);
            let coefs: Vec<f64> = (0..=p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let poly = |x: f64| coefs.iter().rev().fold(0.0, |acc, c| acc * x + c);
            let f = PolyField::interpolate(g, poly);
            for _ in 0..200 {
                let x: f64 = rng.random_range(0.0..1.0);
                assert_abs_diff_eq!(f.eval(x, Side::Left).unwrap(), poly(x), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn traces_at_interfaces() {
        let g = grid(2, 1);
        let f = PolyField::new(g, vec![0.0, 1.0, 5.0, 6.0]).unwrap();
        assert_eq!(f.eval(0.5, Side::Left).unwrap(), 1.0);
        assert_eq!(f.eval(0.5, Side::Right).unwrap(), 5.0);
        assert!(f.eval(1.5, Side::Right).is_err());
        assert_eq!(f.right_trace(0), 1.0);
        assert_eq!(f.left_trace(1), 5.0);
    }

    #[test]
    fn wrong_length_rejected() {
        assert!(PolyField::new(grid(2, 1), vec![0.0; 3]).is_err());
    }

    #[test]
    fn radau_projection_is_exact_for_polynomials_and_pins_left_edge() {
        let g = grid(4, 2);
        let f = PolyField::project_left_radau(g.clone(), |x| 1.0 - 2.0 * x + 3.0 * x * x).unwrap();
        for x in [0.1, 0.4, 0.77] {
            let want = 1.0 - 2.0 * x + 3.0 * x * x;
            assert_abs_diff_eq!(f.eval(x, Side::Left).unwrap(), want, epsilon = 1e-12);
        }
        let s = PolyField::project_left_radau(g.clone(), |x: f64| (5.0 * x).sin()).unwrap();
        for k in 0..4 {
            let a = g.cell_bounds(k).0;
            assert_abs_diff_eq!(s.left_trace(k), (5.0 * a).sin(), epsilon = 1e-13);
        }
    }

    #[test]
    fn mean_and_integral() {
        let f = PolyField::interpolate(grid(4, 2), |x| x * x);
        assert_abs_diff_eq!(f.integral(), 1.0 / 3.0, epsilon = 1e-14);
    }
}
