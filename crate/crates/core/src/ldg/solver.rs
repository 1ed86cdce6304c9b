use std::sync::Arc;

use rayon::prelude::*;

use super::limiter::{Limiter, LimiterStats};
use super::operators::{assemble_operators, CellOperators};
use super::{BoundaryCondition, SolverConfig};
use crate::grid_basis::{adaptive_integrate, LagrangeBasis, PolyField, QuadratureRule, SpatialGrid};
use crate::model::{
    convolution_pieces, diffusion_coeff, flux_eval, perceived_density, FluxVariant, Kernel, ModelParams,
    VelocityFn,
};
use crate::{Error, Result};

/// Lax-Friedrichs flux `½((ρ⁻ + ρ⁺) U(R) + α(ρ⁻ − ρ⁺))` of the nonlocal flux.
pub fn numerical_flux(rho_left: f64, rho_right: f64, r_interface: f64, alpha: f64, velocity: &VelocityFn) -> f64 {
    let l = rho_left.clamp(0.0, 1.0);
    let r = rho_right.clamp(0.0, 1.0);
    0.5 * ((l + r) * velocity.eval(r_interface.clamp(0.0, 1.0)) + alpha * (l - r))
}

/// `β Δx / ((2p+1) α)`, capped by `max_dt` and by `remaining`.
pub fn cfl_dt(dx: f64, degree: usize, max_flux_derivative: f64, config: &SolverConfig, remaining: f64) -> f64 {
    let mut dt = if max_flux_derivative > 0.0 {
        config.cfl_beta * dx / ((2 * degree + 1) as f64 * max_flux_derivative)
    } else {
        f64::INFINITY
    };
    if let Some(cap) = config.max_dt {
        dt = dt.min(cap);
    }
    dt.min(remaining)
}

/// One SSP-RK3 (Shu–Osher) step of `y' = L(y, t)` with `post` applied after
/// every stage (at the stage's time).
pub fn ssp_rk3_step<L, P>(y: &[f64], t: f64, dt: f64, mut rhs: L, mut post: P) -> Result<Vec<f64>>
where
    L: FnMut(&[f64], f64) -> Result<Vec<f64>>,
    P: FnMut(&mut [f64], f64),
{
    let l0 = rhs(y, t)?;
    let mut y1: Vec<f64> = y.iter().zip(&l0).map(|(a, d)| a + dt * d).collect();
    post(&mut y1, t + dt);
    let l1 = rhs(&y1, t + dt)?;
    let mut y2: Vec<f64> = y
        .iter()
        .zip(y1.iter().zip(&l1))
        .map(|(a, (b, d))| 0.75 * a + 0.25 * (b + dt * d))
        .collect();
    post(&mut y2, t + 0.5 * dt);
    let l2 = rhs(&y2, t + 0.5 * dt)?;
    let mut y3: Vec<f64> = y
        .iter()
        .zip(y2.iter().zip(&l2))
        .map(|(a, (b, d))| a / 3.0 + 2.0 / 3.0 * (b + dt * d))
        .collect();
    post(&mut y3, t + dt);
    Ok(y3)
}

/// Window weights for one target point: `R = Σ_j Σ_i w[j][i] ρ̂(cell k+j, ζ_i)`
/// where `ζ_i` are the sample points of each cell.
#[derive(Debug, Clone, Default)]
struct TargetWeights {
    /// Number of cells touched, starting at the target's own cell.
    cells: usize,
    /// `cells × n_samples` weights.
    weights: Vec<f64>,
}

/// Translation-invariant convolution weights of a uniform grid: one set per
/// volume quadrature point plus one for the cell's left edge. The perceived
/// density is sampled at Gauss points of each cell and convolved through
/// its interpolant.
#[derive(Debug, Clone)]
struct Stencil {
    targets: Vec<TargetWeights>,
    /// Basis values at the sample points.
    sample_vals: Vec<Vec<f64>>,
    /// Share of the kernel mass within one cell width.
    near_mass: f64,
}

impl Stencil {
    fn build(grid: &SpatialGrid, kernel: &Kernel, volume_points: &[f64], config: &SolverConfig) -> Result<Self> {
        let dx = grid.dx();
        let samples = QuadratureRule::gauss_legendre(config.conv_samples())?;
        let sample_basis = LagrangeBasis::new(samples.points().to_vec());
        let ns = sample_basis.len();
        let rule = QuadratureRule::gauss_legendre(config.conv_quad_order + ns)?;
        let n_breaks = ((kernel.gamma() / dx).ceil() as usize) + 3;
        let breaks: Vec<f64> = (0..=n_breaks).map(|j| j as f64 * dx).collect();
        let mut positions: Vec<f64> = volume_points.iter().map(|xi| 0.5 * dx * (1.0 + xi)).collect();
        positions.push(0.0);
        let targets = positions
            .into_iter()
            .map(|x| {
                let mut tw = TargetWeights::default();
                for (a, b) in convolution_pieces(kernel, x, &breaks) {
                    let j = (0.5 * (a + b) / dx).floor() as usize;
                    if j + 1 > tw.cells {
                        tw.cells = j + 1;
                        tw.weights.resize(tw.cells * ns, 0.0);
                    }
                    for (y, w) in rule.mapped(a, b) {
                        let kw = w * kernel.weight(y - x);
                        if kw == 0.0 {
                            continue;
                        }
                        let xi = (2.0 * (y - j as f64 * dx) / dx - 1.0).clamp(-1.0, 1.0);
                        for (i, l) in sample_basis.values(xi).into_iter().enumerate() {
                            tw.weights[j * ns + i] += kw * l;
                        }
                    }
                }
                tw
            })
            .collect();
        let basis = grid.basis();
        let sample_vals = samples.points().iter().map(|&z| basis.values(z)).collect();
        let near_mass = adaptive_integrate(&|d| kernel.weight(d), 0.0, dx.min(kernel.gamma()), 1e-8).min(1.0);
        Ok(Self {
            targets,
            sample_vals,
            near_mass,
        })
    }

    fn n_samples(&self) -> usize {
        self.sample_vals.len()
    }
}

/// Output of one spatial residual evaluation.
#[derive(Debug, Clone)]
pub struct Residual {
    /// `dρ/dt` nodal values.
    pub rate: PolyField,
    /// Interface fluxes `Q_{k−1/2}`, `k = 0..=n`.
    pub interface_flux: Vec<f64>,
    /// The dissipation coefficient used by the interface fluxes.
    pub alpha: f64,
    /// Estimated diffusivity of the gradient-dependent part of the flux.
    pub diffusivity: f64,
}

/// Semi-discrete LDG operator for one model on one grid.
#[derive(Debug, Clone)]
pub struct LdgSolver {
    grid: Arc<SpatialGrid>,
    params: ModelParams,
    bc: BoundaryCondition,
    config: SolverConfig,
    ops: CellOperators,
    rule: QuadratureRule,
    vol_vals: Vec<Vec<f64>>,
    vol_ders: Vec<Vec<f64>>,
    stencil: Option<Stencil>,
    limiter: Limiter,
}

impl LdgSolver {
    pub fn new(grid: Arc<SpatialGrid>, params: ModelParams, bc: BoundaryCondition, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        params.validate()?;
        if config.degree != grid.degree() {
            return Err(Error::param(
                "degree",
                format!("config says p = {}, grid has p = {}", config.degree, grid.degree()),
            ));
        }
        let rule = QuadratureRule::gauss_legendre(config.quad_order())?;
        let ops = assemble_operators(&grid, &QuadratureRule::gauss_legendre(grid.degree() + 1)?)?;
        let basis = grid.basis();
        let vol_vals = rule.points().iter().map(|&xi| basis.values(xi)).collect();
        let vol_ders = rule.points().iter().map(|&xi| basis.derivatives(xi)).collect();
        let stencil = match (params.flux, &params.kernel) {
            (FluxVariant::Nonlocal, Some(k)) => Some(Stencil::build(&grid, k, rule.points(), &config)?),
            _ => None,
        };
        let limiter = Limiter::new(&grid, &rule, &config);
        Ok(Self {
            grid,
            params,
            bc,
            config,
            ops,
            rule,
            vol_vals,
            vol_ders,
            stencil,
            limiter,
        })
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn boundary(&self) -> &BoundaryCondition {
        &self.bc
    }

    pub fn operators(&self) -> &CellOperators {
        &self.ops
    }

    /// Auxiliary gradient from `M σ = −C ρ + S1`, with right-sided traces.
    pub fn compute_sigma(&self, rho: &PolyField, t: f64) -> PolyField {
        let n = self.grid.n_cells();
        let np = self.grid.nodes_per_cell();
        let ghosts = self.bc.ghosts(t);
        let mut sigma = vec![0.0; n * np];
        sigma.par_chunks_mut(np).with_min_len(64).enumerate().for_each(|(k, out)| {
            let cell = rho.cell(k);
            let next_left = if k + 1 < n {
                rho.left_trace(k + 1)
            } else {
                match ghosts {
                    Some((_, gr)) => gr,
                    None => rho.left_trace(0),
                }
            };
            let mut rhs = vec![0.0; np];
            for (i, r) in rhs.iter_mut().enumerate() {
                *r = -(0..np).map(|j| self.ops.convection[(i, j)] * cell[j]).sum::<f64>();
            }
            rhs[0] -= cell[0];
            rhs[np - 1] += next_left;
            self.ops.solve_mass(&rhs, out);
        });
        PolyField::new(self.grid.clone(), sigma).expect("matching length")
    }

    /// Perceived density at the sample points of every cell.
    fn perceived_samples(&self, st: &Stencil, rho: &PolyField, sigma: &PolyField) -> (Vec<f64>, f64) {
        let n = self.grid.n_cells();
        let ns = st.n_samples();
        let p = &self.params;
        let mut out = vec![0.0; n * ns];
        let mut stiff: f64 = 0.0;
        for k in 0..n {
            for (i, vals) in st.sample_vals.iter().enumerate() {
                let r: f64 = vals.iter().zip(rho.cell(k)).map(|(b, c)| b * c).sum();
                let s: f64 = vals.iter().zip(sigma.cell(k)).map(|(b, c)| b * c).sum();
                out[k * ns + i] = perceived_density(r, s, p.kappa, &p.saturation);
                stiff = stiff.max(diffusion_coeff(r) * p.saturation.derivative(s).abs());
            }
        }
        (out, p.kappa * stiff)
    }

    /// Convolved perceived density at target `target` of cell `k`
    /// (`k = n` addresses the right end for the edge target).
    fn convolved(&self, st: &Stencil, target: usize, k: usize, hat: &[f64], ghost_right: Option<f64>) -> f64 {
        let n = self.grid.n_cells();
        let ns = st.n_samples();
        let tw = &st.targets[target];
        let mut acc = 0.0;
        for j in 0..tw.cells {
            let w = &tw.weights[j * ns..(j + 1) * ns];
            let idx = k + j;
            if idx >= n {
                if let Some(g) = ghost_right {
                    acc += g * w.iter().sum::<f64>();
                    continue;
                }
            }
            let c = idx % n;
            acc += w.iter().zip(&hat[c * ns..(c + 1) * ns]).map(|(a, b)| a * b).sum::<f64>();
        }
        acc
    }

    fn local_speed(&self, rho: f64, r: f64, sigma: f64) -> f64 {
        let rho = rho.clamp(0.0, 1.0);
        let r = r.clamp(0.0, 1.0);
        let u = &self.params.velocity;
        let mut a = (u.eval(r) + rho * u.derivative(r)).abs();
        if self.params.flux == FluxVariant::Phi {
            a += self.params.kappa * (1.0 - 2.0 * rho).abs() * self.params.saturation.eval(sigma).abs();
        }
        a
    }

    /// Spatial residual `dρ/dt` of the semi-discrete scheme at time `t`.
    pub fn residual(&self, rho: &PolyField, t: f64) -> Residual {
        let sigma = self.compute_sigma(rho, t);
        self.residual_with_sigma(rho, &sigma, t)
    }

    pub fn residual_with_sigma(&self, rho: &PolyField, sigma: &PolyField, t: f64) -> Residual {
        let n = self.grid.n_cells();
        let np = self.grid.nodes_per_cell();
        let ng = self.rule.order();
        let ghosts = self.bc.ghosts(t);
        let variant = self.params.flux;
        let p = &self.params;
        let ghost_hat = ghosts.map(|(_, gr)| perceived_density(gr, 0.0, p.kappa, &p.saturation));
        let (hat, sample_stiffness) = match &self.stencil {
            Some(st) => self.perceived_samples(st, rho, sigma),
            None => (Vec::new(), 0.0),
        };

        // point values at volume quadrature points: (ρ, σ, R)
        let mut points = vec![(0.0, 0.0, 0.0); n * ng];
        points.par_chunks_mut(ng).with_min_len(64).enumerate().for_each(|(k, out)| {
            for (g, slot) in out.iter_mut().enumerate() {
                let vals = &self.vol_vals[g];
                let r: f64 = vals.iter().zip(rho.cell(k)).map(|(b, c)| b * c).sum();
                let s: f64 = vals.iter().zip(sigma.cell(k)).map(|(b, c)| b * c).sum();
                let conv = match &self.stencil {
                    Some(st) => self.convolved(st, g, k, &hat, ghost_hat),
                    None => r,
                };
                *slot = (r, s, conv);
            }
        });

        // interface states k = 0..=n: (ρ⁻, ρ⁺, σ⁻, R)
        let interfaces: Vec<(f64, f64, f64, f64)> = (0..n + 1)
            .map(|k| {
                let (rl, sl) = if k > 0 {
                    (rho.right_trace(k - 1), sigma.right_trace(k - 1))
                } else {
                    match ghosts {
                        Some((gl, _)) => (gl, sigma.left_trace(0)),
                        None => (rho.right_trace(n - 1), sigma.right_trace(n - 1)),
                    }
                };
                let rr = if k < n {
                    rho.left_trace(k)
                } else {
                    match ghosts {
                        Some((_, gr)) => gr,
                        None => rho.left_trace(0),
                    }
                };
                let conv = match &self.stencil {
                    Some(st) => {
                        let kk = if ghosts.is_none() && k == n { 0 } else { k };
                        self.convolved(st, ng, kk, &hat, ghost_hat)
                    }
                    None => 0.0,
                };
                (rl, rr, sl, conv)
            })
            .collect();

        let mut alpha: f64 = 0.0;
        let mut diffusivity: f64 = 0.0;
        for &(r, s, conv) in &points {
            let arg = if variant == FluxVariant::Nonlocal { conv } else { r };
            alpha = alpha.max(self.local_speed(r, arg, s));
            diffusivity = diffusivity.max(match variant {
                FluxVariant::Nonlocal => r.clamp(0.0, 1.0) * p.velocity.derivative(conv.clamp(0.0, 1.0)).abs(),
                FluxVariant::Phi => p.kappa * diffusion_coeff(r) * p.saturation.derivative(s).abs(),
                FluxVariant::LocalLWR => 0.0,
            });
        }
        if let Some(st) = &self.stencil {
            diffusivity *= sample_stiffness * st.near_mass;
        }
        for &(rl, rr, sl, conv) in &interfaces {
            for rho_t in [rl, rr] {
                let arg = if variant == FluxVariant::Nonlocal { conv } else { rho_t };
                alpha = alpha.max(self.local_speed(rho_t, arg, sl));
            }
        }

        let interface_flux: Vec<f64> = interfaces
            .iter()
            .map(|&(rl, rr, sl, conv)| self.interface_flux(rl, rr, sl, conv, alpha))
            .collect();

        let mut rate = vec![0.0; n * np];
        rate.par_chunks_mut(np).with_min_len(256).enumerate().for_each(|(k, out)| {
            let mut rhs = vec![0.0; np];
            for g in 0..ng {
                let (r, s, conv) = points[k * ng + g];
                let q = flux_eval(variant, r, s, conv, &self.params);
                let w = self.rule.weights()[g];
                for (i, v) in rhs.iter_mut().enumerate() {
                    *v += w * q * self.vol_ders[g][i];
                }
            }
            rhs[0] += interface_flux[k];
            rhs[np - 1] -= interface_flux[k + 1];
            self.ops.solve_mass(&rhs, out);
        });

        Residual {
            rate: PolyField::new(self.grid.clone(), rate).expect("matching length"),
            interface_flux,
            alpha,
            diffusivity,
        }
    }

    fn interface_flux(&self, rl: f64, rr: f64, sigma_left: f64, conv: f64, alpha: f64) -> f64 {
        let p = &self.params;
        match p.flux {
            FluxVariant::Nonlocal => numerical_flux(rl, rr, conv, alpha, &p.velocity),
            FluxVariant::LocalLWR | FluxVariant::Phi => {
                let l = rl.clamp(0.0, 1.0);
                let r = rr.clamp(0.0, 1.0);
                let conv_part = 0.5 * (l * p.velocity.eval(l) + r * p.velocity.eval(r) + alpha * (l - r));
                if p.flux == FluxVariant::Phi {
                    conv_part - p.kappa * 0.5 * (diffusion_coeff(l) + diffusion_coeff(r)) * p.saturation.eval(sigma_left)
                } else {
                    conv_part
                }
            }
        }
    }

    /// Largest `|∂ρ Q|` over quadrature points and interface traces.
    pub fn max_wave_speed(&self, rho: &PolyField, t: f64) -> f64 {
        self.residual(rho, t).alpha
    }

    /// Stable step for the wave speed and diffusivity of `res`, shortened to
    /// `remaining`.
    pub fn stable_dt(&self, res: &Residual, remaining: f64) -> f64 {
        let dx = self.grid.dx();
        let p = self.grid.degree();
        let mut dt = cfl_dt(dx, p, res.alpha, &self.config, remaining);
        if res.diffusivity > 0.0 {
            let m = (2 * p + 1) as f64;
            dt = dt.min(self.config.diffusive_safety * dx * dx / (m * m * res.diffusivity));
        }
        dt
    }

    pub fn limit(&self, rho: &mut PolyField, t: f64) -> LimiterStats {
        self.limiter.apply(rho, self.bc.ghosts(t))
    }

    /// Advance by `dt` with limited SSP-RK3 stages.
    pub fn step(&self, rho: &PolyField, t: f64, dt: f64, stats: &mut LimiterStats) -> Result<PolyField> {
        let first = self.residual(rho, t);
        self.step_from(rho, first, t, dt, stats)
    }

    /// [`step`](Self::step) reusing an already computed residual at `t`.
    pub fn step_from(
        &self,
        rho: &PolyField,
        first: Residual,
        t: f64,
        dt: f64,
        stats: &mut LimiterStats,
    ) -> Result<PolyField> {
        let grid = self.grid.clone();
        let mut first = Some(first.rate.into_coeffs());
        let mut local = LimiterStats::default();
        let out = ssp_rk3_step(
            rho.coeffs(),
            t,
            dt,
            |y, s| match first.take() {
                Some(rate) => Ok(rate),
                None => {
                    let field = PolyField::new(grid.clone(), y.to_vec())?;
                    Ok(self.residual(&field, s).rate.into_coeffs())
                }
            },
            |y, s| {
                let mut field = PolyField::new(grid.clone(), y.to_vec()).expect("matching length");
                local.absorb(self.limit(&mut field, s));
                y.copy_from_slice(field.coeffs());
            },
        )?;
        stats.absorb(local);
        PolyField::new(grid, out)
    }
}
