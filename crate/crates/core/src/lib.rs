//! Simulation and calibration of a first-order nonlocal traffic-flow model
//! with saturated nonlinear diffusion.
//!
//! The density obeys
//!
//! ```text
//! ∂t ρ + ∂x [ ρ U( (ρ̂ * K_γ)(x) ) ] = 0,    ρ̂ = ρ + κ ρ(1 − ρ) Ψ(∂x ρ)
//! ```
//!
//! where `K_γ` is a forward-looking kernel of support `[0, γ]` and `Ψ` a
//! bounded saturation of the density gradient. The crate provides
//!
//! * [`grid_basis`]: uniform partitions, nodal bases on Chebyshev points,
//!   Gauss-Legendre rules and piecewise-polynomial fields;
//! * [`model`]: the physics (diffusion coefficient, saturation, kernels,
//!   velocity laws, flux variants);
//! * [`ldg`]: a local discontinuous Galerkin discretization advanced by
//!   SSP-RK3 with slope and bound-preserving limiters;
//! * [`data`]: preparation of loop-detector or trajectory measurements;
//! * [`fd_calibration`]: band-matching calibration of the density-flow
//!   relation;
//! * [`solution_calibration`]: trajectory (L2) calibration against
//!   measured space-time windows.

pub mod data;
pub mod error;
pub mod fd_calibration;
pub mod grid_basis;
pub mod ldg;
pub mod model;
pub mod solution_calibration;

pub use error::{Error, Result};
