use nalgebra::DMatrix;

use crate::grid_basis::{QuadratureRule, SpatialGrid};
use crate::{Error, Result};

/// Mass and convection matrices of one cell (identical for every cell of a
/// uniform grid).
#[derive(Debug, Clone)]
pub struct CellOperators {
    /// `M_ij = ∫ φ_i φ_j dx`.
    pub mass: DMatrix<f64>,
    /// `C_ij = ∫ φ_i' φ_j dx`.
    pub convection: DMatrix<f64>,
    /// `M⁻¹`, applied once per cell and stage.
    pub mass_inv: DMatrix<f64>,
}

impl CellOperators {
    pub fn size(&self) -> usize {
        self.mass.nrows()
    }

    /// `out = M⁻¹ rhs`.
    pub fn solve_mass(&self, rhs: &[f64], out: &mut [f64]) {
        let n = self.size();
        for i in 0..n {
            out[i] = (0..n).map(|j| self.mass_inv[(i, j)] * rhs[j]).sum();
        }
    }
}

/// Assemble the per-cell matrices with `rule`, which must integrate products
/// of two degree-`p` polynomials exactly.
pub fn assemble_operators(grid: &SpatialGrid, rule: &QuadratureRule) -> Result<CellOperators> {
    let p = grid.degree();
    if rule.exact_degree() < 2 * p {
        return Err(Error::Quadrature(format!(
            "{}-point rule is exact to degree {}, need {}",
            rule.order(),
            rule.exact_degree(),
            2 * p
        )));
    }
    let np = p + 1;
    let half = 0.5 * grid.dx();
    let basis = grid.basis();
    let mut mass = DMatrix::zeros(np, np);
    let mut convection = DMatrix::zeros(np, np);
    for (&xi, &w) in rule.points().iter().zip(rule.weights()) {
        let vals = basis.values(xi);
        let ders = basis.derivatives(xi);
        for i in 0..np {
            for j in 0..np {
                mass[(i, j)] += w * half * vals[i] * vals[j];
                // dφ/dx · dx = dφ/dξ · dξ
                convection[(i, j)] += w * ders[i] * vals[j];
            }
        }
    }
    let mass_inv = mass
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidGrid("singular mass matrix".into()))?;
    Ok(CellOperators {
        mass,
        convection,
        mass_inv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_basis::build_grid;
    use approx::assert_abs_diff_eq;

    #[test]
    fn linear_mass_matrix_on_unit_cell() {
        let g = build_grid(0.0, 1.0, 1, 1).unwrap();
        let ops = assemble_operators(&g, &QuadratureRule::gauss_legendre(2).unwrap()).unwrap();
        let want = [[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(ops.mass[(i, j)], want[i][j], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn convection_row_sums_are_edge_differences() {
        for p in 1..=3 {
            let g = build_grid(0.0, 0.7, 3, p).unwrap();
            let ops = assemble_operators(&g, &QuadratureRule::gauss_legendre(p + 1).unwrap()).unwrap();
            for i in 0..=p {
                let row: f64 = (0..=p).map(|j| ops.convection[(i, j)]).sum();
                let want = (i == p) as u8 as f64 - (i == 0) as u8 as f64;
                assert_abs_diff_eq!(row, want, epsilon = 1e-13);
                let col: f64 = (0..=p).map(|j| ops.convection[(j, i)]).sum();
                assert_abs_diff_eq!(col, 0.0, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn entries_stable_under_higher_order_rule() {
        for p in 1..=3 {
            let g = build_grid(-1.0, 2.0, 5, p).unwrap();
            let a = assemble_operators(&g, &QuadratureRule::gauss_legendre(p + 1).unwrap()).unwrap();
            let b = assemble_operators(&g, &QuadratureRule::gauss_legendre(p + 6).unwrap()).unwrap();
            assert!((&a.mass - &b.mass).abs().max() < 1e-12);
            assert!((&a.convection - &b.convection).abs().max() < 1e-12);
        }
    }

    #[test]
    fn mass_is_symmetric_positive_definite() {
        for p in 1..=3 {
            let g = build_grid(0.0, 1.0, 4, p).unwrap();
            let ops = assemble_operators(&g, &QuadratureRule::gauss_legendre(p + 1).unwrap()).unwrap();
            assert!((&ops.mass - ops.mass.transpose()).abs().max() < 1e-15);
            assert!(ops.mass.clone().cholesky().is_some());
            let id = &ops.mass * &ops.mass_inv;
            assert!((id - DMatrix::identity(p + 1, p + 1)).abs().max() < 1e-12);
        }
    }

    #[test]
    fn under_resolved_rule_rejected() {
        let g = build_grid(0.0, 1.0, 4, 3).unwrap();
        assert!(assemble_operators(&g, &QuadratureRule::gauss_legendre(3).unwrap()).is_err());
    }
}
