//! Physics of the model: diffusion coefficient, saturation, perceived
//! density, look-ahead kernels, velocity laws and the flux family.

mod kernel;
mod saturation;
mod spline;
mod velocity;

use serde::{Deserialize, Serialize};

pub use kernel::{
    convolution_pieces, convolve, convolve_field, expint_e1, kernel_eval, kernel_normalization, Kernel,
    KernelShape, KernelSpec, RightExtension,
};
pub use saturation::{saturation, SaturationKind, SaturationParams};
pub use spline::{ControlPoints, CubicSpline, PiecewiseLinear};
pub use velocity::{velocity_eval, VelocityFn};

use crate::{Error, Result};

/// Which flux closes the conservation law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FluxVariant {
    /// `ρ U(ρ̂ * K_γ)`.
    Nonlocal,
    /// `ρ U(ρ)`.
    #[serde(alias = "LWR", alias = "lwr")]
    LocalLWR,
    /// `ρ U(ρ) − κ D(ρ) Ψ(∂x ρ)`.
    Phi,
}

impl FluxVariant {
    pub fn name(&self) -> &'static str {
        match self {
            FluxVariant::Nonlocal => "Nonlocal",
            FluxVariant::LocalLWR => "LWR",
            FluxVariant::Phi => "Phi",
        }
    }
}

impl std::str::FromStr for FluxVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nonlocal" => Ok(FluxVariant::Nonlocal),
            "lwr" | "locallwr" | "local_lwr" => Ok(FluxVariant::LocalLWR),
            "phi" => Ok(FluxVariant::Phi),
            _ => Err(Error::param("flux", format!("unknown flux variant `{s}`"))),
        }
    }
}

/// Everything the flux needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelParamsSpec", into = "ModelParamsSpec")]
pub struct ModelParams {
    pub flux: FluxVariant,
    pub kappa: f64,
    /// Required by [`FluxVariant::Nonlocal`], ignored otherwise.
    pub kernel: Option<Kernel>,
    pub velocity: VelocityFn,
    pub saturation: SaturationParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelParamsSpec {
    flux: FluxVariant,
    #[serde(default)]
    kappa: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kernel: Option<Kernel>,
    velocity: VelocityFn,
    #[serde(default)]
    saturation: SaturationParams,
}

impl TryFrom<ModelParamsSpec> for ModelParams {
    type Error = Error;
    fn try_from(s: ModelParamsSpec) -> Result<Self> {
        let p = ModelParams {
            flux: s.flux,
            kappa: s.kappa,
            kernel: s.kernel,
            velocity: s.velocity,
            saturation: s.saturation,
        };
        p.validate()?;
        Ok(p)
    }
}

impl From<ModelParams> for ModelParamsSpec {
    fn from(p: ModelParams) -> Self {
        ModelParamsSpec {
            flux: p.flux,
            kappa: p.kappa,
            kernel: p.kernel,
            velocity: p.velocity,
            saturation: p.saturation,
        }
    }
}

impl ModelParams {
    pub fn nonlocal(kernel: Kernel, kappa: f64, velocity: VelocityFn, saturation: SaturationParams) -> Result<Self> {
        let p = Self {
            flux: FluxVariant::Nonlocal,
            kappa,
            kernel: Some(kernel),
            velocity,
            saturation,
        };
        p.validate()?;
        Ok(p)
    }

    /// Local LWR (`γ = κ = 0`).
    pub fn lwr(velocity: VelocityFn) -> Result<Self> {
        let p = Self {
            flux: FluxVariant::LocalLWR,
            kappa: 0.0,
            kernel: None,
            velocity,
            saturation: SaturationParams::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn phi(kappa: f64, velocity: VelocityFn, saturation: SaturationParams) -> Result<Self> {
        let p = Self {
            flux: FluxVariant::Phi,
            kappa,
            kernel: None,
            velocity,
            saturation,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(Error::param("kappa", format!("must lie in [0, 1], got {}", self.kappa)));
        }
        if self.flux == FluxVariant::Nonlocal && self.kernel.is_none() {
            return Err(Error::param("kernel", "the nonlocal flux needs a kernel"));
        }
        self.velocity.validate()
    }

    /// Look-ahead length, zero for the local variants.
    pub fn gamma(&self) -> f64 {
        match (self.flux, &self.kernel) {
            (FluxVariant::Nonlocal, Some(k)) => k.gamma(),
            _ => 0.0,
        }
    }

    pub fn perceived(&self, rho: f64, drho: f64) -> f64 {
        perceived_density(rho, drho, self.kappa, &self.saturation)
    }
}

/// `D(ρ) = ρ(1 − ρ)` with `ρ` clamped into `[0, 1]`.
pub fn diffusion_coeff(rho: f64) -> f64 {
    let r = rho.clamp(0.0, 1.0);
    r * (1.0 - r)
}

/// `ρ̂ = ρ + κ D(ρ) Ψ(∂x ρ)`.
///
/// Evaluated in a rearranged form whose terms are each in `[0, 1]`, so the
/// result stays in `[0, 1]` in floating point as well.
pub fn perceived_density(rho: f64, drho: f64, kappa: f64, params: &SaturationParams) -> f64 {
    let r = rho.clamp(0.0, 1.0);
    let k = kappa.clamp(0.0, 1.0);
    let psi = params.eval(drho).clamp(-1.0, 1.0);
    if psi >= 0.0 {
        // 1 − (1 − ρ)(1 − κρΨ)
        1.0 - (1.0 - r) * (1.0 - k * r * psi)
    } else {
        // ρ(1 − κ(1 − ρ)|Ψ|)
        r * (1.0 - k * (1.0 - r) * (-psi))
    }
}

/// Flux at a point given the density, its gradient and the convolved
/// perceived density `r_conv` (only used by the nonlocal variant).
pub fn flux_eval(variant: FluxVariant, rho: f64, sigma: f64, r_conv: f64, params: &ModelParams) -> f64 {
    let r = rho.clamp(0.0, 1.0);
    match variant {
        FluxVariant::Nonlocal => r * params.velocity.eval(r_conv.clamp(0.0, 1.0)),
        FluxVariant::LocalLWR => r * params.velocity.eval(r),
        FluxVariant::Phi => {
            r * params.velocity.eval(r) - params.kappa * diffusion_coeff(r) * params.saturation.eval(sigma)
        }
    }
}
