use serde::{Deserialize, Serialize};

use super::spline::{CubicSpline, PiecewiseLinear};
use crate::{Error, Result};

/// Density-to-speed relation `U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocityFn {
    /// `v (1 − exp(c/v · (1 − ρ_max/r)))`.
    Newell { v: f64, c: f64, rho_max: f64 },
    CubicSpline { spline: CubicSpline },
    PiecewiseLinear { interpolant: PiecewiseLinear },
    /// Density-independent speed, for pure advection.
    Constant { v: f64 },
}

impl VelocityFn {
    pub fn newell(v: f64, c: f64, rho_max: f64) -> Result<Self> {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::param("v", format!("must be positive, got {v}")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::param("c", format!("must be positive, got {c}")));
        }
        if !(rho_max > 0.0 && rho_max.is_finite()) {
            return Err(Error::param("rho_max", format!("must be positive, got {rho_max}")));
        }
        Ok(VelocityFn::Newell { v, c, rho_max })
    }

    pub fn cubic_spline(points: &[(f64, f64)]) -> Result<Self> {
        Ok(VelocityFn::CubicSpline {
            spline: CubicSpline::clamped(points)?,
        })
    }

    pub fn piecewise_linear(points: &[(f64, f64)]) -> Result<Self> {
        Ok(VelocityFn::PiecewiseLinear {
            interpolant: PiecewiseLinear::new(points)?,
        })
    }

    pub fn constant(v: f64) -> Result<Self> {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::param("v", format!("must be nonnegative, got {v}")));
        }
        Ok(VelocityFn::Constant { v })
    }

    /// Check parameters of a deserialized value.
    pub fn validate(&self) -> Result<()> {
        match self {
            VelocityFn::Newell { v, c, rho_max } => Self::newell(*v, *c, *rho_max).map(|_| ()),
            VelocityFn::Constant { v } => Self::constant(*v).map(|_| ()),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        match self {
            VelocityFn::Newell { v, c, rho_max } => {
                if !(r > 0.0) {
                    return *v;
                }
                let r = r.min(*rho_max);
                let e = c / v * (1.0 - rho_max / r);
                -v * e.exp_m1()
            }
            VelocityFn::CubicSpline { spline } => spline.eval(r),
            VelocityFn::PiecewiseLinear { interpolant } => interpolant.eval(r),
            VelocityFn::Constant { v } => *v,
        }
    }

    /// `dU/dr`; zero where `eval` is clamped.
    pub fn derivative(&self, r: f64) -> f64 {
        match self {
            VelocityFn::Newell { v, c, rho_max } => {
                if !(r > 0.0) || r > *rho_max {
                    return 0.0;
                }
                let e = c / v * (1.0 - rho_max / r);
                if e < -700.0 {
                    return 0.0;
                }
                -c * rho_max / (r * r) * e.exp()
            }
            VelocityFn::CubicSpline { spline } => spline.derivative(r),
            VelocityFn::PiecewiseLinear { interpolant } => interpolant.derivative(r),
            VelocityFn::Constant { .. } => 0.0,
        }
    }

    /// Speed at zero density.
    pub fn max_speed(&self) -> f64 {
        self.eval(0.0)
    }

    /// Bound on `|U'|` over `[0, 1]`, by sampling.
    pub fn max_abs_derivative(&self) -> f64 {
        match self {
            VelocityFn::Constant { .. } => 0.0,
            _ => (0..=2000)
                .map(|i| self.derivative(i as f64 / 2000.0).abs())
                .fold(0.0, f64::max),
        }
    }

    /// Sampled check that `U` never increases on `[0, hi]`.
    pub fn is_nonincreasing(&self, hi: f64, samples: usize, tol: f64) -> bool {
        let mut prev = self.eval(0.0);
        (1..samples).all(|s| {
            let u = self.eval(hi * s as f64 / (samples - 1) as f64);
            let ok = u <= prev + tol;
            prev = u;
            ok
        })
    }
}

/// Free-function form of [`VelocityFn::eval`].
pub fn velocity_eval(vel: &VelocityFn, r: f64) -> f64 {
    vel.eval(r)
}
