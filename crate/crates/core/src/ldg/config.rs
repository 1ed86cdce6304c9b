use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Discretization and time-stepping controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// CFL number `β` in `Δt = β Δx / ((2p+1) α)`.
    pub cfl_beta: f64,
    /// Polynomial degree per cell.
    pub degree: usize,
    /// Gauss-Legendre points per cell for volume integrals; `None` picks `p + 2`.
    pub quad_order: Option<usize>,
    /// Gauss-Legendre points per piece of a convolution window when
    /// precomputing its weights.
    pub conv_quad_order: usize,
    /// Points per cell at which the perceived density is sampled for the
    /// convolution; `None` picks `p + 2`.
    pub conv_samples: Option<usize>,
    /// TVB constant `M` of the slope limiter (0 gives TVD minmod).
    pub limiter_tvb_m: f64,
    pub enable_slope_limiter: bool,
    pub enable_bounds_limiter: bool,
    pub max_dt: Option<f64>,
    /// Safety factor of the step restriction from the gradient-dependent
    /// (diffusive) part of the flux, `Δt ≤ s Δx² / ((2p+1)² ν)`.
    pub diffusive_safety: f64,
    /// Abort after this many steps.
    pub max_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            cfl_beta: 0.5,
            degree: 1,
            quad_order: None,
            conv_quad_order: 6,
            conv_samples: None,
            limiter_tvb_m: 0.0,
            enable_slope_limiter: true,
            enable_bounds_limiter: true,
            max_dt: None,
            diffusive_safety: 0.5,
            max_steps: 5_000_000,
        }
    }
}

impl SolverConfig {
    pub fn with_degree(degree: usize) -> Self {
        Self {
            degree,
            ..Self::default()
        }
    }

    pub fn quad_order(&self) -> usize {
        self.quad_order.unwrap_or(self.degree + 2)
    }

    pub fn conv_samples(&self) -> usize {
        self.conv_samples.unwrap_or(self.degree + 2)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cfl_beta > 0.0 && self.cfl_beta <= 1.0) {
            return Err(Error::param("cfl_beta", format!("must lie in (0, 1], got {}", self.cfl_beta)));
        }
        if self.degree == 0 || self.degree > 3 {
            return Err(Error::param("degree", format!("must be 1, 2 or 3, got {}", self.degree)));
        }
        let q = self.quad_order();
        if 2 * q < self.degree + 1 {
            return Err(Error::param(
                "quad_order",
                format!("{q} points is below (p+1)/2 for p = {}", self.degree),
            ));
        }
        if self.conv_quad_order == 0 {
            return Err(Error::param("conv_quad_order", "must be at least 1"));
        }
        if self.conv_samples() == 0 {
            return Err(Error::param("conv_samples", "must be at least 1"));
        }
        if !(self.limiter_tvb_m >= 0.0 && self.limiter_tvb_m.is_finite()) {
            return Err(Error::param("limiter_tvb_m", "must be a nonnegative number"));
        }
        if let Some(d) = self.max_dt {
            if !(d > 0.0) {
                return Err(Error::param("max_dt", format!("must be positive, got {d}")));
            }
        }
        if !(self.diffusive_safety > 0.0) {
            return Err(Error::param("diffusive_safety", "must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        SolverConfig::default().validate().unwrap();
        for p in 1..=3 {
            SolverConfig::with_degree(p).validate().unwrap();
        }
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            SolverConfig { cfl_beta: 1.5, ..Default::default() },
            SolverConfig { cfl_beta: 0.0, ..Default::default() },
            SolverConfig { degree: 0, ..Default::default() },
            SolverConfig { degree: 3, quad_order: Some(1), ..Default::default() },
            SolverConfig { max_dt: Some(-1.0), ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<SolverConfig>(r#"{"cfl_bet": 0.3}"#).is_err());
        let c: SolverConfig = serde_json::from_str(r#"{"cfl_beta": 0.3}"#).unwrap();
        assert_eq!(c.cfl_beta, 0.3);
        assert_eq!(c.degree, 1);
    }
}
