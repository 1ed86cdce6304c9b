use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Shape of the bounded gradient response `Ψ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SaturationKind {
    #[default]
    Tanh,
    /// `s / sqrt(1 + s²)`
    Algebraic,
    /// `s / sqrt(1 + (ν/c)² s²)`, bounded by `c/ν`.
    Viscous { nu: f64, c: f64 },
}

/// `Ψ(u) = kind((K1·u − K2) / K3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SaturationSpec", into = "SaturationSpec")]
pub struct SaturationParams {
    k1: f64,
    k2: f64,
    k3: f64,
    kind: SaturationKind,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SaturationSpec {
    #[serde(default = "one")]
    k1: f64,
    #[serde(default)]
    k2: f64,
    #[serde(default = "one")]
    k3: f64,
    #[serde(default)]
    kind: SaturationKind,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<SaturationSpec> for SaturationParams {
    type Error = Error;
    fn try_from(s: SaturationSpec) -> Result<Self> {
        SaturationParams::new(s.k1, s.k2, s.k3, s.kind)
    }
}

impl From<SaturationParams> for SaturationSpec {
    fn from(p: SaturationParams) -> Self {
        SaturationSpec {
            k1: p.k1,
            k2: p.k2,
            k3: p.k3,
            kind: p.kind,
        }
    }
}

impl Default for SaturationParams {
    fn default() -> Self {
        Self {
            k1: 1.0,
            k2: 0.0,
            k3: 1.0,
            kind: SaturationKind::Tanh,
        }
    }
}

impl SaturationParams {
    pub fn new(k1: f64, k2: f64, k3: f64, kind: SaturationKind) -> Result<Self> {
        if !(k1.is_finite() && k2.is_finite() && k3.is_finite()) {
            return Err(Error::param("K1/K2/K3", "must be finite"));
        }
        if k3 == 0.0 {
            return Err(Error::param("K3", "must be nonzero"));
        }
        if let SaturationKind::Viscous { nu, c } = kind {
            if !(nu > 0.0 && c > 0.0) {
                return Err(Error::param("nu/c", "viscosity and propagation speed must be positive"));
            }
            // |Ψ| ≤ c/ν must stay within the unit bound
            if c > nu {
                return Err(Error::param("nu/c", format!("c/ν = {} exceeds 1", c / nu)));
            }
        }
        Ok(Self { k1, k2, k3, kind })
    }

    pub fn tanh(k1: f64, k2: f64, k3: f64) -> Result<Self> {
        Self::new(k1, k2, k3, SaturationKind::Tanh)
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn k2(&self) -> f64 {
        self.k2
    }

    pub fn k3(&self) -> f64 {
        self.k3
    }

    pub fn kind(&self) -> SaturationKind {
        self.kind
    }

    pub fn eval(&self, u: f64) -> f64 {
        let s = (self.k1 * u - self.k2) / self.k3;
        match self.kind {
            SaturationKind::Tanh => s.tanh(),
            SaturationKind::Algebraic => bounded_ratio(s, 1.0),
            SaturationKind::Viscous { nu, c } => bounded_ratio(s, nu / c),
        }
    }

    /// `dΨ/du`.
    pub fn derivative(&self, u: f64) -> f64 {
        let s = (self.k1 * u - self.k2) / self.k3;
        let ds = self.k1 / self.k3;
        match self.kind {
            SaturationKind::Tanh => {
                let t = s.tanh();
                ds * (1.0 - t * t)
            }
            SaturationKind::Algebraic => ds * (1.0 + s * s).powf(-1.5),
            SaturationKind::Viscous { nu, c } => {
                let rs = nu / c * s;
                ds * (1.0 + rs * rs).powf(-1.5)
            }
        }
    }

    /// Upper bound of `|dΨ/du|`.
    pub fn max_slope(&self) -> f64 {
        // every shape has unit slope at the origin and is flatter elsewhere
        (self.k1 / self.k3).abs()
    }
}

/// `s / sqrt(1 + (r s)²)` without overflow for large `|s|`.
fn bounded_ratio(s: f64, r: f64) -> f64 {
    if s.is_infinite() {
        return s.signum() / r;
    }
    s / 1f64.hypot(r * s)
}

/// Free-function form of [`SaturationParams::eval`].
pub fn saturation(u: f64, params: &SaturationParams) -> f64 {
    params.eval(u)
}
