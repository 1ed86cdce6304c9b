use serde::{Deserialize, Serialize};

use crate::grid_basis::{adaptive_integrate, PolyField, QuadratureRule, Side};
use crate::{Error, Result};

/// Look-ahead weight profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelShape {
    Linear,
    Quadratic,
    #[serde(alias = "exp")]
    Exponential,
}

impl KernelShape {
    pub fn name(&self) -> &'static str {
        match self {
            KernelShape::Linear => "linear",
            KernelShape::Quadratic => "quadratic",
            KernelShape::Exponential => "exp",
        }
    }
}

impl std::str::FromStr for KernelShape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(KernelShape::Linear),
            "quadratic" => Ok(KernelShape::Quadratic),
            "exp" | "exponential" => Ok(KernelShape::Exponential),
            other => Err(Error::param("kernel", format!("unknown shape `{other}`"))),
        }
    }
}

/// Levels of `t = d / (γ (γ − d))` at which the exponential kernel is split;
/// its scaled profile is `exp(−t)`.
const EXP_GRADING: [f64; 24] = [
    0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 5.0, 6.0, 7.0, 8.0, 10.0, 12.0, 14.0, 17.0,
    20.0, 24.0, 28.0, 33.0, 38.0, 45.0,
];

/// Nonincreasing kernel supported on `[0, γ]` with unit mass.
///
/// The exponential profile `e^{1/(x−γ)}` is held internally as
/// `e^{1/γ + 1/(x−γ)}` so that it stays representable for small `γ`; the
/// normalization is computed numerically for every shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelSpec", into = "KernelSpec")]
pub struct Kernel {
    shape: KernelShape,
    gamma: f64,
    /// Integral of the (scaled) raw profile over `[0, γ]`.
    mass: f64,
    /// Offsets in `[0, γ]` where integration pieces are split.
    offsets: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub shape: KernelShape,
    pub gamma: f64,
}

impl TryFrom<KernelSpec> for Kernel {
    type Error = Error;
    fn try_from(s: KernelSpec) -> Result<Self> {
        Kernel::new(s.shape, s.gamma)
    }
}

impl From<Kernel> for KernelSpec {
    fn from(k: Kernel) -> Self {
        KernelSpec {
            shape: k.shape,
            gamma: k.gamma,
        }
    }
}

impl Kernel {
    pub fn new(shape: KernelShape, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::param("gamma", format!("must be positive, got {gamma}")));
        }
        let offsets = match shape {
            KernelShape::Linear | KernelShape::Quadratic => vec![0.0, gamma],
            KernelShape::Exponential => {
                let mut v = vec![0.0];
                v.extend(
                    EXP_GRADING
                        .iter()
                        .map(|&t| t * gamma * gamma / (1.0 + t * gamma))
                        .filter(|&d| d < gamma),
                );
                v.push(gamma);
                v
            }
        };
        let mut kernel = Self {
            shape,
            gamma,
            mass: 1.0,
            offsets,
        };
        kernel.mass = kernel
            .offsets
            .windows(2)
            .map(|w| adaptive_integrate(&|d| kernel.raw(d), w[0], w[1], 1e-14))
            .sum();
        Ok(kernel)
    }

    pub fn shape(&self) -> KernelShape {
        self.shape
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Offsets splitting `[0, γ]` into smooth, well-resolved pieces.
    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    fn raw(&self, d: f64) -> f64 {
        let g = self.gamma;
        if !(0.0..g).contains(&d) {
            return 0.0;
        }
        match self.shape {
            KernelShape::Linear => 2.0 / (g * g) * (g - d),
            KernelShape::Quadratic => 1.5 / (g * g * g) * (g * g - d * d),
            KernelShape::Exponential => (-d / (g * (g - d))).exp(),
        }
    }

    /// Normalized weight at offset `d`; zero outside `[0, γ)`.
    pub fn weight(&self, d: f64) -> f64 {
        self.raw(d) / self.mass
    }

    /// Normalized weight, rejecting negative offsets.
    pub fn eval(&self, d: f64) -> Result<f64> {
        if d < 0.0 || d.is_nan() {
            return Err(Error::param("x", format!("kernel offset must be nonnegative, got {d}")));
        }
        Ok(self.weight(d))
    }

    /// Constant `Z` dividing the unscaled profile (`e^{1/(x−γ)}` for the
    /// exponential shape) so that it integrates to one.
    pub fn normalization(&self) -> f64 {
        match self.shape {
            KernelShape::Exponential => self.mass * (-1.0 / self.gamma).exp(),
            _ => self.mass,
        }
    }

    /// `Ei(−γ) + γ e^{−1/γ}`, the closed form sometimes quoted for the
    /// exponential normalization.
    pub fn quoted_exponential_normalization(&self) -> Option<f64> {
        (self.shape == KernelShape::Exponential)
            .then(|| -expint_e1(self.gamma) + self.gamma * (-1.0 / self.gamma).exp())
    }

    /// `γ e^{−1/γ} + Ei(−1/γ)`, the antiderivative-based closed form.
    pub fn analytic_exponential_normalization(&self) -> Option<f64> {
        (self.shape == KernelShape::Exponential)
            .then(|| self.gamma * (-1.0 / self.gamma).exp() - expint_e1(1.0 / self.gamma))
    }

    /// Relative deviation of the numerical normalization from the quoted
    /// closed form.
    pub fn quoted_normalization_deviation(&self) -> Option<f64> {
        self.quoted_exponential_normalization()
            .map(|q| (self.normalization() - q) / q.abs())
    }
}

/// Normalized kernel weight at offset `x`.
pub fn kernel_eval(kernel: &Kernel, x: f64) -> Result<f64> {
    kernel.eval(x)
}

/// Normalization constant of the unscaled profile of `shape`.
pub fn kernel_normalization(shape: KernelShape, gamma: f64) -> Result<f64> {
    Ok(Kernel::new(shape, gamma)?.normalization())
}

/// Exponential integral `E1(y) = −Ei(−y)` for `y > 0`.
pub fn expint_e1(y: f64) -> f64 {
    const EULER: f64 = 0.577_215_664_901_532_9;
    if y <= 0.0 {
        return f64::NAN;
    }
    if y <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            let kf = k as f64;
            term *= -y / kf;
            let add = -term / kf;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        -EULER - y.ln() + sum
    } else {
        // modified Lentz on the continued fraction
        let tiny = 1e-300;
        let mut b = y + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-y).exp()
    }
}

/// Integration pieces covering `[x, x + γ]`, split at the kernel offsets and
/// at every point of `breaks` (sorted) falling strictly inside.
pub fn convolution_pieces(kernel: &Kernel, x: f64, breaks: &[f64]) -> Vec<(f64, f64)> {
    let end = x + kernel.gamma;
    let tol = 1e-13 * kernel.gamma.max(x.abs());
    let lo = breaks.partition_point(|&b| b <= x + tol);
    let hi = breaks.partition_point(|&b| b < end - tol);
    let mut cuts: Vec<f64> = kernel.offsets.iter().map(|d| x + d).collect();
    if lo < hi {
        cuts.extend_from_slice(&breaks[lo..hi]);
        cuts.sort_by(f64::total_cmp);
    }
    let mut pieces = Vec::with_capacity(cuts.len());
    let mut a = cuts[0];
    for &b in &cuts[1..] {
        if b - a > tol {
            pieces.push((a, b));
            a = b;
        }
    }
    if let Some(last) = pieces.last_mut() {
        last.1 = end;
    }
    pieces
}

/// `∫_x^{x+γ} K(y − x) f(y) dy`, piecewise Gauss-Legendre on
/// [`convolution_pieces`].
pub fn convolve<F: FnMut(f64) -> f64>(
    kernel: &Kernel,
    rule: &QuadratureRule,
    x: f64,
    breaks: &[f64],
    mut f: F,
) -> f64 {
    let mut acc = 0.0;
    for (a, b) in convolution_pieces(kernel, x, breaks) {
        for (y, w) in rule.mapped(a, b) {
            acc += w * kernel.weight(y - x) * f(y);
        }
    }
    acc
}

/// How a field is continued past the right end of its domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RightExtension {
    /// Repeat the right boundary trace.
    RightTrace,
    /// Use a fixed value.
    Constant(f64),
    /// Wrap around to the left end.
    Periodic,
}

/// Convolution of a piecewise polynomial with `kernel` at `x`.
pub fn convolve_field(
    field: &PolyField,
    kernel: &Kernel,
    rule: &QuadratureRule,
    x: f64,
    ext: RightExtension,
) -> Result<f64> {
    let grid = field.grid();
    let (lo, hi) = (grid.left(), grid.right());
    if x < lo || x > hi {
        return Err(Error::OutOfDomain { x, lo, hi });
    }
    let len = hi - lo;
    let last = field.right_trace(grid.n_cells() - 1);
    let mut breaks = grid.partition().to_vec();
    if ext == RightExtension::Periodic {
        let wraps = (kernel.gamma() / len).ceil() as usize;
        for w in 1..=wraps {
            breaks.extend(grid.partition()[1..].iter().map(|b| b + w as f64 * len));
        }
    }
    let mut failure = None;
    let value = convolve(kernel, rule, x, &breaks, |y| {
        let y_in = if y <= hi {
            y
        } else {
            match ext {
                RightExtension::RightTrace => return last,
                RightExtension::Constant(c) => return c,
                RightExtension::Periodic => lo + (y - lo).rem_euclid(len),
            }
        };
        field.eval(y_in, Side::Right).unwrap_or_else(|e| {
            failure = Some(e);
            f64::NAN
        })
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_basis::build_grid;
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    /// Composite trapezoid with `n` panels: independent of the Gauss machinery.
    fn trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let inner: f64 = (1..n).map(|i| f(a + i as f64 * h)).sum();
        h * (0.5 * (f(a) + f(b)) + inner)
    }

    #[test]
    fn point_values() {
        let lin = Kernel::new(KernelShape::Linear, 2.0).unwrap();
        assert_abs_diff_eq!(lin.eval(0.0).unwrap(), 1.0, epsilon = 1e-14);
        let quad = Kernel::new(KernelShape::Quadratic, 1.0).unwrap();
        assert_abs_diff_eq!(quad.eval(1.0).unwrap(), 0.0);
        let exp = Kernel::new(KernelShape::Exponential, 2.0).unwrap();
        assert!(exp.eval(2.0 - 1e-9).unwrap() < 1e-300);
        assert!(exp.eval(-0.1).is_err());
        assert_eq!(exp.weight(2.5), 0.0);
    }

    #[test]
    fn polynomial_kernels_already_normalized() {
        for g in [0.004, 0.3, 2.0] {
            assert_abs_diff_eq!(kernel_normalization(KernelShape::Linear, g).unwrap(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(kernel_normalization(KernelShape::Quadratic, g).unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn exponential_normalization_matches_dense_trapezoid() {
        let z = kernel_normalization(KernelShape::Exponential, 2.0).unwrap();
        let oracle = trapezoid(|x| if x >= 2.0 { 0.0 } else { (1.0 / (x - 2.0)).exp() }, 0.0, 2.0, 400_000);
        assert_abs_diff_eq!(z, oracle, epsilon = 1e-10);
        // mpmath: 2 e^{-1/2} + Ei(-1/2)
        assert_abs_diff_eq!(z, 0.653_287_724_649_106, epsilon = 1e-13);
        let k = Kernel::new(KernelShape::Exponential, 2.0).unwrap();
        assert_abs_diff_eq!(k.analytic_exponential_normalization().unwrap(), z, epsilon = 1e-13);
        // the quoted form Ei(−γ) + γ e^{−1/γ} = 1.16416… does not normalize
        assert_abs_diff_eq!(k.quoted_exponential_normalization().unwrap(), 1.164_160_808_717_205_7, epsilon = 1e-12);
        assert!(k.quoted_normalization_deviation().unwrap().abs() > 0.4);
    }

    #[test]
    fn e1_matches_reference_values() {
        // mpmath e1
        assert_abs_diff_eq!(expint_e1(0.5), 0.559_773_594_776_160_8, epsilon = 1e-15);
        assert_abs_diff_eq!(expint_e1(2.0), 0.048_900_510_708_061_12, epsilon = 1e-15);
        assert_abs_diff_eq!(expint_e1(250.0) * 250f64.exp() * 250.0, 0.996_031_622_023_976, epsilon = 1e-12);
    }

    #[test]
    fn unit_mass_and_monotone() {
        let rule = QuadratureRule::gauss_legendre(6).unwrap();
        for shape in [KernelShape::Linear, KernelShape::Quadratic, KernelShape::Exponential] {
            for g in [0.004, 0.04, 0.3, 2.0] {
                let k = Kernel::new(shape, g).unwrap();
                let mass = convolve(&k, &rule, 0.0, &[], |_| 1.0);
                assert!((mass - 1.0).abs() < 1e-10, "{shape:?} γ={g}: {mass}");
                let mut prev = f64::INFINITY;
                for i in 0..1000 {
                    let w = k.eval(g * i as f64 / 999.0).unwrap();
                    assert!(w <= prev + 1e-12);
                    prev = w;
                }
            }
        }
    }

    #[test]
    fn constant_field_convolves_to_itself() {
        let g = Arc::new(build_grid(0.0, 1.0, 10, 2).unwrap());
        let f = PolyField::constant(g, 0.42);
        let rule = QuadratureRule::gauss_legendre(4).unwrap();
        for shape in [KernelShape::Linear, KernelShape::Quadratic, KernelShape::Exponential] {
            let k = Kernel::new(shape, 0.25).unwrap();
            for x in [0.0, 0.33, 0.9, 1.0] {
                let r = convolve_field(&f, &k, &rule, x, RightExtension::RightTrace).unwrap();
                assert_abs_diff_eq!(r, 0.42, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn identity_field_linear_kernel_shifts_by_third() {
        let g = Arc::new(build_grid(0.0, 1.0, 10, 1).unwrap());
        let f = PolyField::interpolate(g, |x| x);
        let rule = QuadratureRule::gauss_legendre(3).unwrap();
        let gamma = 0.3;
        let k = Kernel::new(KernelShape::Linear, gamma).unwrap();
        for x in [0.1, 0.25, 0.5] {
            let r = convolve_field(&f, &k, &rule, x, RightExtension::RightTrace).unwrap();
            let oracle = trapezoid(|y| 2.0 / (gamma * gamma) * (gamma - (y - x)) * y, x, x + gamma, 200_000);
            assert_abs_diff_eq!(r, x + gamma / 3.0, epsilon = 1e-12);
            assert_abs_diff_eq!(r, oracle, epsilon = 1e-9);
        }
    }

    #[test]
    fn distant_bump_is_invisible() {
        let g = Arc::new(build_grid(0.0, 1.0, 50, 1).unwrap());
        let f = PolyField::interpolate(g, |x| if (x - 0.8).abs() < 0.01 { 5.0 } else { 0.2 });
        let rule = QuadratureRule::gauss_legendre(3).unwrap();
        let k = Kernel::new(KernelShape::Quadratic, 0.1).unwrap();
        let r = convolve_field(&f, &k, &rule, 0.3, RightExtension::RightTrace).unwrap();
        assert_abs_diff_eq!(r, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn periodic_extension_wraps() {
        let g = Arc::new(build_grid(0.0, 1.0, 20, 2).unwrap());
        let f = PolyField::interpolate(g, |x| (2.0 * std::f64::consts::PI * x).sin());
        let rule = QuadratureRule::gauss_legendre(4).unwrap();
        let k = Kernel::new(KernelShape::Linear, 0.2).unwrap();
        let wrapped = convolve_field(&f, &k, &rule, 0.95, RightExtension::Periodic).unwrap();
        let shifted = convolve_field(&f, &k, &rule, 0.0, RightExtension::Periodic).unwrap();
        let direct = convolve(&k, &rule, 0.95, &[], |y| (2.0 * std::f64::consts::PI * y).sin());
        assert_abs_diff_eq!(wrapped, direct, epsilon = 1e-4);
        assert!(shifted.is_finite());
    }

    #[test]
    fn pieces_cover_window() {
        let k = Kernel::new(KernelShape::Linear, 0.35).unwrap();
        let breaks = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];
        let p = convolution_pieces(&k, 0.1, &breaks);
        assert_eq!(p.first().unwrap().0, 0.1);
        assert_abs_diff_eq!(p.last().unwrap().1, 0.45);
        assert_eq!(p.len(), 4);
        for w in p.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
    }
}
