use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlPoints {
    pub points: Vec<(f64, f64)>,
}

fn check_points(points: &[(f64, f64)], min: usize) -> Result<()> {
    if points.len() < min {
        return Err(Error::param(
            "points",
            format!("need at least {min} control points, got {}", points.len()),
        ));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::param("points", "control points must be finite"));
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::param("points", "abscissae must be strictly increasing"));
    }
    Ok(())
}

fn segment(xs: &[f64], x: f64) -> usize {
    xs.partition_point(|&xi| xi <= x).clamp(1, xs.len() - 1) - 1
}

/// Cubic spline with zero slope at both ends, extended by constants outside
/// the control range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ControlPoints", into = "ControlPoints")]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl TryFrom<ControlPoints> for CubicSpline {
    type Error = Error;
    fn try_from(c: ControlPoints) -> Result<Self> {
        CubicSpline::clamped(&c.points)
    }
}

impl From<CubicSpline> for ControlPoints {
    fn from(s: CubicSpline) -> Self {
        ControlPoints { points: s.points() }
    }
}

impl CubicSpline {
    pub fn clamped(points: &[(f64, f64)]) -> Result<Self> {
        check_points(points, 2)?;
        let n = points.len();
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        // tridiagonal system for knot second derivatives, end slopes 0
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        diag[0] = 2.0 * h[0];
        sup[0] = h[0];
        rhs[0] = 6.0 * (ys[1] - ys[0]) / h[0];
        for i in 1..n - 1 {
            sub[i] = h[i - 1];
            diag[i] = 2.0 * (h[i - 1] + h[i]);
            sup[i] = h[i];
            rhs[i] = 6.0 * ((ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1]);
        }
        sub[n - 1] = h[n - 2];
        diag[n - 1] = 2.0 * h[n - 2];
        rhs[n - 1] = -6.0 * (ys[n - 1] - ys[n - 2]) / h[n - 2];
        for i in 1..n {
            let w = sub[i] / diag[i - 1];
            diag[i] -= w * sup[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        let mut m = vec![0.0; n];
        m[n - 1] = rhs[n - 1] / diag[n - 1];
        for i in (0..n - 1).rev() {
            m[i] = (rhs[i] - sup[i] * m[i + 1]) / diag[i];
        }
        Ok(Self { xs, ys, m })
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        self.xs.iter().copied().zip(self.ys.iter().copied()).collect()
    }

    pub fn knots(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.ys
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = segment(&self.xs, x);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] || x >= self.xs[n - 1] {
            return 0.0;
        }
        let i = segment(&self.xs, x);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        (self.ys[i + 1] - self.ys[i]) / h
            + ((1.0 - 3.0 * a * a) * self.m[i] + (3.0 * b * b - 1.0) * self.m[i + 1]) * h / 6.0
    }

    /// True when `samples` equally spaced evaluations never increase by
    /// more than `tol`.
    pub fn is_nonincreasing(&self, samples: usize, tol: f64) -> bool {
        let (lo, hi) = (self.xs[0], *self.xs.last().unwrap());
        let mut prev = self.eval(lo);
        (1..samples).all(|s| {
            let v = self.eval(lo + (hi - lo) * s as f64 / (samples - 1) as f64);
            let ok = v <= prev + tol;
            prev = v;
            ok
        })
    }
}

/// Piecewise-linear interpolant, constant outside the control range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ControlPoints", into = "ControlPoints")]
pub struct PiecewiseLinear {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl TryFrom<ControlPoints> for PiecewiseLinear {
    type Error = Error;
    fn try_from(c: ControlPoints) -> Result<Self> {
        PiecewiseLinear::new(&c.points)
    }
}

impl From<PiecewiseLinear> for ControlPoints {
    fn from(s: PiecewiseLinear) -> Self {
        ControlPoints {
            points: s.xs.iter().copied().zip(s.ys.iter().copied()).collect(),
        }
    }
}

impl PiecewiseLinear {
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        check_points(points, 1)?;
        Ok(Self {
            xs: points.iter().map(|p| p.0).collect(),
            ys: points.iter().map(|p| p.1).collect(),
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.ys
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if n == 1 || x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = segment(&self.xs, x);
        let t = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.ys[i] + t * (self.ys[i + 1] - self.ys[i])
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if n == 1 || x < self.xs[0] || x >= self.xs[n - 1] {
            return 0.0;
        }
        let i = segment(&self.xs, x);
        (self.ys[i + 1] - self.ys[i]) / (self.xs[i + 1] - self.xs[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn interpolates_knots_with_flat_ends() {
        let pts = [(0.0, 1.0), (0.3, 0.8), (0.5, 0.7), (1.0, 0.0)];
        let s = CubicSpline::clamped(&pts).unwrap();
        for (x, y) in pts {
            assert_abs_diff_eq!(s.eval(x), y, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(s.derivative(1e-9), 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(s.derivative(1.0 - 1e-9), 0.0, epsilon = 1e-6);
        assert_eq!(s.eval(-1.0), 1.0);
        assert_eq!(s.eval(2.0), 0.0);
    }

    #[test]
    fn two_points_give_smoothstep() {
        // zero end slopes through (0,1),(1,0): 1 − 3x² + 2x³
        let s = CubicSpline::clamped(&[(0.0, 1.0), (1.0, 0.0)]).unwrap();
        for x in [0.1, 0.5, 0.8] {
            assert_abs_diff_eq!(s.eval(x), 1.0 - 3.0 * x * x + 2.0 * x * x * x, epsilon = 1e-14);
            assert_abs_diff_eq!(s.derivative(x), -6.0 * x + 6.0 * x * x, epsilon = 1e-13);
        }
        assert!(s.is_nonincreasing(1000, 0.0));
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let s = CubicSpline::clamped(&[(0.0, 1.0), (0.25, 0.9), (0.5, 0.5), (0.75, 0.2), (1.0, 0.0)]).unwrap();
        for x in [0.1, 0.3, 0.6, 0.9] {
            let fd = (s.eval(x + 1e-6) - s.eval(x - 1e-6)) / 2e-6;
            assert_abs_diff_eq!(s.derivative(x), fd, epsilon = 1e-7);
        }
    }

    #[test]
    fn overshooting_data_detected() {
        let s = CubicSpline::clamped(&[(0.0, 1.0), (0.1, 0.2), (0.2, 0.19), (1.0, 0.0)]).unwrap();
        assert!(!s.is_nonincreasing(1000, 1e-9));
    }

    #[test]
    fn piecewise_linear() {
        let p = PiecewiseLinear::new(&[(0.0, 1.0), (0.5, 0.5), (1.0, 0.0)]).unwrap();
        assert_abs_diff_eq!(p.eval(0.25), 0.75);
        assert_eq!(p.derivative(0.75), -1.0);
        assert_eq!(p.eval(3.0), 0.0);
        assert!(PiecewiseLinear::new(&[(0.0, 1.0), (0.0, 0.5)]).is_err());
    }
}
