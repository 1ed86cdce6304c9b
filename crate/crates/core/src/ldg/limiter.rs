use serde::{Deserialize, Serialize};

use super::SolverConfig;
use crate::grid_basis::{PolyField, QuadratureRule, SpatialGrid};

/// How often each limiter modified a cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LimiterStats {
    pub slope_limited: u64,
    pub bounds_scaled: u64,
    /// Cells whose mean itself left `[0, 1]` and was reset to a clamped
    /// constant; this is the only modification that changes mass.
    pub mean_clamped: u64,
}

impl LimiterStats {
    pub fn absorb(&mut self, other: LimiterStats) {
        self.slope_limited += other.slope_limited;
        self.bounds_scaled += other.bounds_scaled;
        self.mean_clamped += other.mean_clamped;
    }
}

fn minmod3(a: f64, b: f64, c: f64) -> f64 {
    if a > 0.0 && b > 0.0 && c > 0.0 {
        a.min(b).min(c)
    } else if a < 0.0 && b < 0.0 && c < 0.0 {
        a.max(b).max(c)
    } else {
        0.0
    }
}

/// TVB-modified minmod: `a` is kept when `|a| ≤ M Δx²`.
fn minmod_tvb(a: f64, b: f64, c: f64, m_dx2: f64) -> f64 {
    if a.abs() <= m_dx2 {
        a
    } else {
        minmod3(a, b, c)
    }
}

/// Precomputed data for the slope and bound-preserving limiters.
#[derive(Debug, Clone)]
pub struct Limiter {
    dx: f64,
    /// `∫ ξ φ_i dξ` over the reference cell.
    first_moments: Vec<f64>,
    /// Reference node positions.
    nodes: Vec<f64>,
    /// Basis values at interior check points (the volume rule).
    check_points: Vec<Vec<f64>>,
    m_dx2: f64,
    slope: bool,
    bounds: bool,
}

impl Limiter {
    pub fn new(grid: &SpatialGrid, volume_rule: &QuadratureRule, config: &SolverConfig) -> Self {
        let basis = grid.basis();
        let np = grid.nodes_per_cell();
        let moment_rule = QuadratureRule::gauss_legendre(np + 1).expect("positive order");
        let first_moments = (0..np)
            .map(|i| moment_rule.integrate(-1.0, 1.0, |xi| xi * basis.eval(i, xi).0))
            .collect();
        let check_points = volume_rule.points().iter().map(|&xi| basis.values(xi)).collect();
        let dx = grid.dx();
        Self {
            dx,
            first_moments,
            nodes: basis.nodes().to_vec(),
            check_points,
            m_dx2: config.limiter_tvb_m * dx * dx,
            slope: config.enable_slope_limiter,
            bounds: config.enable_bounds_limiter,
        }
    }

    /// Limit `rho` in place. `ghosts` supplies the densities beyond the
    /// left and right ends; `None` wraps around periodically.
    pub fn apply(&self, rho: &mut PolyField, ghosts: Option<(f64, f64)>) -> LimiterStats {
        let mut stats = LimiterStats::default();
        let n = rho.grid().n_cells();
        if self.slope {
            let means = rho.cell_means();
            for k in 0..n {
                let left = match (k, ghosts) {
                    (0, Some((g, _))) => g,
                    (0, None) => means[n - 1],
                    _ => means[k - 1],
                };
                let right = match (k + 1 == n, ghosts) {
                    (true, Some((_, g))) => g,
                    (true, None) => means[0],
                    _ => means[k + 1],
                };
                if self.limit_slope(rho.cell_mut(k), means[k], right - means[k], means[k] - left) {
                    stats.slope_limited += 1;
                }
            }
        }
        if self.bounds {
            for k in 0..n {
                let mean = rho.cell_mean(k);
                match self.scale_into_bounds(rho.cell_mut(k), mean) {
                    BoundsOutcome::Unchanged => {}
                    BoundsOutcome::Scaled => stats.bounds_scaled += 1,
                    BoundsOutcome::MeanClamped => stats.mean_clamped += 1,
                }
            }
        }
        stats
    }

    fn limit_slope(&self, cell: &mut [f64], mean: f64, d_plus: f64, d_minus: f64) -> bool {
        let p = cell.len() - 1;
        let up = cell[p] - mean;
        let um = mean - cell[0];
        let up_mod = minmod_tvb(up, d_plus, d_minus, self.m_dx2);
        let um_mod = minmod_tvb(um, d_plus, d_minus, self.m_dx2);
        if up_mod == up && um_mod == um {
            return false;
        }
        let a1 = 1.5 * cell.iter().zip(&self.first_moments).map(|(c, m)| c * m).sum::<f64>();
        // half-cell increment of the linear part
        let h = minmod_tvb(a1, d_plus, d_minus, self.m_dx2);
        for (c, xi) in cell.iter_mut().zip(&self.nodes) {
            *c = mean + h * xi;
        }
        true
    }

    fn scale_into_bounds(&self, cell: &mut [f64], mean: f64) -> BoundsOutcome {
        if !(0.0..=1.0).contains(&mean) {
            let c = mean.clamp(0.0, 1.0);
            cell.fill(c);
            return BoundsOutcome::MeanClamped;
        }
        let mut lo = cell.iter().copied().fold(f64::INFINITY, f64::min);
        let mut hi = cell.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for vals in &self.check_points {
            let v: f64 = vals.iter().zip(cell.iter()).map(|(b, c)| b * c).sum();
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo >= 0.0 && hi <= 1.0 {
            return BoundsOutcome::Unchanged;
        }
        let mut theta: f64 = 1.0;
        if hi > 1.0 {
            theta = theta.min((1.0 - mean) / (hi - mean));
        }
        if lo < 0.0 {
            theta = theta.min(mean / (mean - lo));
        }
        for c in cell.iter_mut() {
            *c = (mean + theta * (*c - mean)).clamp(0.0, 1.0);
        }
        BoundsOutcome::Scaled
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }
}

enum BoundsOutcome {
    Unchanged,
    Scaled,
    MeanClamped,
}

/// Slope limiting followed by bound-preserving scaling, as configured.
pub fn apply_limiters(rho: &PolyField, config: &SolverConfig, ghosts: Option<(f64, f64)>) -> (PolyField, LimiterStats) {
    let rule = QuadratureRule::gauss_legendre(config.quad_order()).expect("positive order");
    let limiter = Limiter::new(rho.grid(), &rule, config);
    let mut out = rho.clone();
    let stats = limiter.apply(&mut out, ghosts);
    (out, stats)
}
