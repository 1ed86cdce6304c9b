//! Local discontinuous Galerkin discretization of the conservation law,
//! advanced in time by limited SSP-RK3.
//!
//! The gradient is carried as an auxiliary unknown `σ` with right-sided
//! traces; the flux uses Lax-Friedrichs at interfaces with a global
//! dissipation coefficient per stage.

mod boundary;
mod config;
mod limiter;
mod operators;
mod record;
mod solver;

pub use boundary::{BoundaryCondition, TimeSeries};
pub use config::SolverConfig;
pub use limiter::{apply_limiters, Limiter, LimiterStats};
pub use operators::{assemble_operators, CellOperators};
pub use record::{simulate, SimulationFailure, SolutionRecord, StepStats};
pub use solver::{cfl_dt, numerical_flux, ssp_rk3_step, LdgSolver, Residual};

use crate::grid_basis::PolyField;
use crate::model::ModelParams;
use crate::Result;

/// Auxiliary gradient of `rho`; see [`LdgSolver::compute_sigma`].
pub fn compute_sigma(
    rho: &PolyField,
    params: &ModelParams,
    bc: &BoundaryCondition,
    config: &SolverConfig,
    t: f64,
) -> Result<PolyField> {
    let solver = LdgSolver::new(rho.grid().clone(), params.clone(), bc.clone(), config.clone())?;
    Ok(solver.compute_sigma(rho, t))
}

/// `dρ/dt` of the semi-discrete scheme; see [`LdgSolver::residual`].
pub fn spatial_residual(
    rho: &PolyField,
    params: &ModelParams,
    bc: &BoundaryCondition,
    config: &SolverConfig,
    t: f64,
) -> Result<Residual> {
    let solver = LdgSolver::new(rho.grid().clone(), params.clone(), bc.clone(), config.clone())?;
    Ok(solver.residual(rho, t))
}

/// One limited SSP-RK3 step.
pub fn rk3_step(
    rho: &PolyField,
    params: &ModelParams,
    bc: &BoundaryCondition,
    config: &SolverConfig,
    t: f64,
    dt: f64,
) -> Result<PolyField> {
    let solver = LdgSolver::new(rho.grid().clone(), params.clone(), bc.clone(), config.clone())?;
    solver.step(rho, t, dt, &mut LimiterStats::default())
}
