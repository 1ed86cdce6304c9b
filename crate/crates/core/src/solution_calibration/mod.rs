//! Calibration against measured space-time windows: the model is run from
//! the measured initial and boundary data and scored by its L2 distance to
//! the measured density.

mod report;

use std::cmp::Ordering;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{compare_models, write_table, ComparisonReport, ComparisonRow, TABLE_HEADER};

use crate::data::NormalizedDataset;
use crate::grid_basis::{PolyField, Side, SpatialGrid};
use crate::ldg::{BoundaryCondition, LdgSolver, SolverConfig, TimeSeries};
use crate::model::{FluxVariant, Kernel, KernelShape, ModelParams, SaturationParams, VelocityFn};
use crate::{Error, Result};

/// A measured window: density on a rectangular `(t, x)` grid together with
/// the data that drive a simulation over it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub x_window: (f64, f64),
    pub t_window: (f64, f64),
    pub positions: Vec<f64>,
    pub times: Vec<f64>,
    pub initial_profile: Vec<f64>,
    /// Ghost densities left and right of the window.
    pub left_trace: TimeSeries,
    pub right_trace: TimeSeries,
    /// `truth[i][j]` at `times[i]`, `positions[j]`.
    pub truth: Vec<Vec<f64>>,
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[1] > w[0])
}

impl Scenario {
    /// Window with explicit boundary traces; the initial profile is the
    /// first row of `truth`.
    pub fn new(
        positions: Vec<f64>,
        times: Vec<f64>,
        truth: Vec<Vec<f64>>,
        left_trace: TimeSeries,
        right_trace: TimeSeries,
    ) -> Result<Self> {
        if positions.len() < 2 || times.len() < 2 {
            return Err(Error::Data(format!(
                "a window needs at least 2 positions and 2 times, got {} × {}",
                positions.len(),
                times.len()
            )));
        }
        if !strictly_increasing(&positions) || !strictly_increasing(&times) {
            return Err(Error::Data("window coordinates must be strictly increasing".into()));
        }
        if truth.len() != times.len() || truth.iter().any(|r| r.len() != positions.len()) {
            return Err(Error::Data("density field does not match the window grid".into()));
        }
        if let Some(v) = truth.iter().flatten().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Data(format!("density {v} outside [0, 1]")));
        }
        Ok(Self {
            x_window: (positions[0], positions[positions.len() - 1]),
            t_window: (times[0], times[times.len() - 1]),
            initial_profile: truth[0].clone(),
            positions,
            times,
            truth,
            left_trace,
            right_trace,
        })
    }

    pub fn area(&self) -> f64 {
        (self.x_window.1 - self.x_window.0) * (self.t_window.1 - self.t_window.0)
    }

    /// Piecewise-linear interpolant of the initial profile.
    pub fn initial_at(&self, x: f64) -> f64 {
        lerp(&self.positions, &self.initial_profile, x)
    }
}

fn lerp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let i = xs.partition_point(|&s| s <= x) - 1;
    let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + w * (ys[i + 1] - ys[i])
}

fn indices_within(values: &[f64], (lo, hi): (f64, f64)) -> Vec<usize> {
    let tol = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
    (0..values.len())
        .filter(|&i| values[i] >= lo - tol && values[i] <= hi + tol)
        .collect()
}

/// Slice the dataset to `x_range × t_range` (scaled units); the outermost
/// retained columns become the boundary traces.
pub fn extract_scenario(ds: &NormalizedDataset, x_range: (f64, f64), t_range: (f64, f64)) -> Result<Scenario> {
    for (name, (lo, hi), v) in [("x_range", x_range, &ds.positions), ("t_range", t_range, &ds.times)] {
        let tol = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        if !(lo < hi) || lo < v[0] - tol || hi > v[v.len() - 1] + tol {
            return Err(Error::param(
                name,
                format!("[{lo}, {hi}] is not a range inside [{}, {}]", v[0], v[v.len() - 1]),
            ));
        }
    }
    let js = indices_within(&ds.positions, x_range);
    let is = indices_within(&ds.times, t_range);
    if js.len() < 2 || is.len() < 2 {
        return Err(Error::Data(format!(
            "window holds {} positions and {} times; at least 2 of each are needed",
            js.len(),
            is.len()
        )));
    }
    let positions: Vec<f64> = js.iter().map(|&j| ds.positions[j]).collect();
    let times: Vec<f64> = is.iter().map(|&i| ds.times[i]).collect();
    let truth: Vec<Vec<f64>> = is.iter().map(|&i| js.iter().map(|&j| ds.rho[i][j]).collect()).collect();
    let column = |c: usize| truth.iter().map(|r| r[c]).collect::<Vec<f64>>();
    let left = TimeSeries::new(times.clone(), column(0))?;
    let right = TimeSeries::new(times.clone(), column(positions.len() - 1))?;
    Scenario::new(positions, times, truth, left, right)
}

/// Discretization used when simulating a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolutionSetup {
    /// Cells across the window; `None` gives one cell per data interval.
    pub n_cells: Option<usize>,
    pub solver: SolverConfig,
}

impl Default for SolutionSetup {
    fn default() -> Self {
        Self {
            n_cells: None,
            solver: SolverConfig::with_degree(1),
        }
    }
}

impl SolutionSetup {
    pub fn grid(&self, scenario: &Scenario) -> Result<SpatialGrid> {
        let n = self.n_cells.unwrap_or(scenario.positions.len() - 1);
        SpatialGrid::uniform(scenario.x_window.0, scenario.x_window.1, n, self.solver.degree)
    }
}

/// Value of a discontinuous field at `x`: the mean of both one-sided limits.
pub fn sample_field(field: &PolyField, x: f64) -> Result<f64> {
    Ok(0.5 * (field.eval(x, Side::Left)? + field.eval(x, Side::Right)?))
}

/// Run `params` over the window and sample the result on the data grid.
pub fn simulate_scenario(scenario: &Scenario, params: &ModelParams, setup: &SolutionSetup) -> Result<Vec<Vec<f64>>> {
    let grid = Arc::new(setup.grid(scenario)?);
    let initial = PolyField::interpolate(grid.clone(), |x| scenario.initial_at(x));
    let bc = BoundaryCondition::Dirichlet {
        left: scenario.left_trace.clone(),
        right: scenario.right_trace.clone(),
    };
    let solver = LdgSolver::new(grid.clone(), params.clone(), bc, setup.solver.clone())?;
    let (t0, tf) = scenario.t_window;
    let record = solver.simulate(&initial, t0, tf, &scenario.times)?;
    (0..record.times.len())
        .map(|i| {
            let field = record.snapshot(i);
            scenario.positions.iter().map(|&x| sample_field(&field, x)).collect()
        })
        .collect()
}

/// Composite trapezoid weights on the points `xs`.
pub fn trapezoid_weights(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut w = vec![0.0; n];
    for k in 0..n.saturating_sub(1) {
        let h = 0.5 * (xs[k + 1] - xs[k]);
        w[k] += h;
        w[k + 1] += h;
    }
    w
}

/// `√∬(ρ̃ − ρ)²` by the trapezoid rule on the data grid.
pub fn l2_distance(scenario: &Scenario, solution: &[Vec<f64>]) -> f64 {
    let wt = trapezoid_weights(&scenario.times);
    let wx = trapezoid_weights(&scenario.positions);
    let mut sum = 0.0;
    for (i, (truth, sim)) in scenario.truth.iter().zip(solution).enumerate() {
        for (j, (a, b)) in truth.iter().zip(sim).enumerate() {
            sum += wt[i] * wx[j] * (a - b) * (a - b);
        }
    }
    sum.sqrt()
}

/// Mean squared residual over all data points.
pub fn msr(scenario: &Scenario, solution: &[Vec<f64>]) -> f64 {
    let n = (scenario.times.len() * scenario.positions.len()) as f64;
    let sum: f64 = scenario
        .truth
        .iter()
        .zip(solution)
        .flat_map(|(t, s)| t.iter().zip(s).map(|(a, b)| (a - b) * (a - b)))
        .sum();
    sum / n
}

/// Scores of one parameter set; a failed run scores `+∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub l2: f64,
    pub msr: f64,
    pub solution: Option<Vec<Vec<f64>>>,
    pub failure: Option<String>,
}

pub fn evaluate(scenario: &Scenario, params: &ModelParams, setup: &SolutionSetup) -> Evaluation {
    match simulate_scenario(scenario, params, setup) {
        Ok(sol) => Evaluation {
            l2: l2_distance(scenario, &sol),
            msr: msr(scenario, &sol),
            solution: Some(sol),
            failure: None,
        },
        Err(e) => {
            log::warn!("simulation failed for {params:?}: {e}");
            Evaluation {
                l2: f64::INFINITY,
                msr: f64::INFINITY,
                solution: None,
                failure: Some(e.to_string()),
            }
        }
    }
}

pub fn l2_objective(scenario: &Scenario, params: &ModelParams, setup: &SolutionSetup) -> f64 {
    evaluate(scenario, params, setup).l2
}

/// Newell and κ values searched by [`calibrate_solution`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolutionGrid {
    pub v: Vec<f64>,
    pub c: Vec<f64>,
    pub kappa: Vec<f64>,
}

impl Default for SolutionGrid {
    fn default() -> Self {
        let tenths = |a: u32, b: u32| (a..=b).map(|i| f64::from(i) / 10.0).collect::<Vec<_>>();
        Self {
            v: tenths(1, 20),
            c: tenths(1, 20),
            kappa: tenths(0, 10),
        }
    }
}

/// Best point of one model variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantFit {
    pub params: ModelParams,
    pub v: f64,
    pub c: f64,
    pub l2: f64,
    pub msr: f64,
    pub evaluated: usize,
    pub diverged: usize,
    /// Best solution on the data grid.
    pub solution: Vec<Vec<f64>>,
}

impl VariantFit {
    pub fn flux(&self) -> FluxVariant {
        self.params.flux
    }
}

struct Candidate {
    l2: f64,
    kappa: f64,
    c: f64,
    v: f64,
}

fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    a.l2.total_cmp(&b.l2)
        .then(a.kappa.total_cmp(&b.kappa))
        .then(a.c.total_cmp(&b.c))
        .then(a.v.total_cmp(&b.v))
}

fn build_params(
    flux: FluxVariant,
    kernel: Option<&Kernel>,
    kappa: f64,
    v: f64,
    c: f64,
    sat: &SaturationParams,
) -> Result<ModelParams> {
    let vel = VelocityFn::newell(v, c, 1.0)?;
    match flux {
        FluxVariant::Nonlocal => {
            let k = kernel.ok_or_else(|| Error::param("kernel", "the nonlocal flux needs a kernel"))?;
            ModelParams::nonlocal(k.clone(), kappa, vel, *sat)
        }
        FluxVariant::LocalLWR => ModelParams::lwr(vel),
        FluxVariant::Phi => ModelParams::phi(kappa, vel, *sat),
    }
}

/// Exhaustive search of one variant; LWR ignores the κ grid.
pub fn calibrate_variant(
    scenario: &Scenario,
    flux: FluxVariant,
    kernel: Option<&Kernel>,
    grid: &SolutionGrid,
    saturation: &SaturationParams,
    setup: &SolutionSetup,
) -> Result<VariantFit> {
    let kappas = if flux == FluxVariant::LocalLWR {
        vec![0.0]
    } else {
        grid.kappa.clone()
    };
    if grid.v.is_empty() || grid.c.is_empty() || kappas.is_empty() {
        return Err(Error::Calibration("empty search grid".into()));
    }
    let mut points = Vec::with_capacity(kappas.len() * grid.c.len() * grid.v.len());
    for &kappa in &kappas {
        for &c in &grid.c {
            for &v in &grid.v {
                points.push((kappa, c, v, build_params(flux, kernel, kappa, v, c, saturation)?));
            }
        }
    }
    let scores: Vec<Candidate> = points
        .par_iter()
        .map(|(kappa, c, v, p)| Candidate {
            l2: l2_objective(scenario, p, setup),
            kappa: *kappa,
            c: *c,
            v: *v,
        })
        .collect();
    let diverged = scores.iter().filter(|s| !s.l2.is_finite()).count();
    let best = scores
        .iter()
        .filter(|s| s.l2.is_finite())
        .min_by(|a, b| rank(a, b))
        .ok_or_else(|| Error::Calibration(format!("all {} runs of the {} model failed", scores.len(), flux.name())))?;
    let params = build_params(flux, kernel, best.kappa, best.v, best.c, saturation)?;
    let eval = evaluate(scenario, &params, setup);
    log::info!(
        "{} fit: v = {}, c = {}, kappa = {}, l2 = {:.6e}, msr = {:.6e} ({} runs, {diverged} failed)",
        flux.name(),
        best.v,
        best.c,
        best.kappa,
        eval.l2,
        eval.msr,
        scores.len()
    );
    Ok(VariantFit {
        params,
        v: best.v,
        c: best.c,
        l2: eval.l2,
        msr: eval.msr,
        evaluated: scores.len(),
        diverged,
        solution: eval.solution.expect("the winning run succeeded before"),
    })
}

/// Calibrate `flux`: one fit per γ for the nonlocal model, a single fit
/// otherwise.
pub fn calibrate_solution(
    scenario: &Scenario,
    flux: FluxVariant,
    kernel: KernelShape,
    gammas: &[f64],
    grid: &SolutionGrid,
    saturation: &SaturationParams,
    setup: &SolutionSetup,
) -> Result<Vec<VariantFit>> {
    match flux {
        FluxVariant::Nonlocal => {
            if gammas.is_empty() {
                return Err(Error::Calibration("the nonlocal model needs at least one gamma".into()));
            }
            gammas
                .iter()
                .map(|&g| {
                    let k = Kernel::new(kernel, g)?;
                    calibrate_variant(scenario, flux, Some(&k), grid, saturation, setup)
                })
                .collect()
        }
        _ => Ok(vec![calibrate_variant(scenario, flux, None, grid, saturation, setup)?]),
    }
}

/// A window whose density is produced by the model itself: `initial` is
/// the profile at `positions` and the boundaries hold constant ghost
/// densities.
pub fn synthesize(
    params: &ModelParams,
    setup: &SolutionSetup,
    positions: Vec<f64>,
    times: Vec<f64>,
    initial: &[f64],
    ghosts: (f64, f64),
) -> Result<Scenario> {
    let rows = vec![initial.to_vec(); times.len()];
    let left = TimeSeries::constant(ghosts.0)?;
    let right = TimeSeries::constant(ghosts.1)?;
    let mut scenario = Scenario::new(positions, times, rows, left, right)?;
    let mut truth = simulate_scenario(&scenario, params, setup)?;
    truth[0] = initial.to_vec();
    for v in truth.iter_mut().flatten() {
        *v = v.clamp(0.0, 1.0);
    }
    scenario.truth = truth;
    Ok(scenario)
}
