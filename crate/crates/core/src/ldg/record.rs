use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use super::limiter::LimiterStats;
use super::solver::LdgSolver;
use super::{BoundaryCondition, SolverConfig};
use crate::grid_basis::{PolyField, SpatialGrid};
use crate::model::ModelParams;
use crate::{Error, Result};

/// Why a run stopped early, with the last state that was still finite.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("simulation failed at t = {t} after {steps} steps: {reason}")]
pub struct SimulationFailure {
    pub t: f64,
    pub steps: usize,
    pub reason: String,
    /// `(time, nodal values)` of the last accepted state.
    pub last_valid: Option<(f64, Vec<f64>)>,
}

/// Summary of the accepted step sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepStats {
    pub steps: usize,
    pub dt_min: f64,
    pub dt_max: f64,
    pub dt_mean: f64,
}

/// Nodal snapshots at the requested output times.
#[derive(Debug, Clone)]
pub struct SolutionRecord {
    pub grid: Arc<SpatialGrid>,
    pub params: ModelParams,
    pub config: SolverConfig,
    pub times: Vec<f64>,
    pub snapshots: Vec<Vec<f64>>,
    pub dt_history: Vec<f64>,
    pub limiter: LimiterStats,
}

#[derive(Serialize)]
struct RecordMeta<'a> {
    params: &'a ModelParams,
    config: &'a SolverConfig,
    domain: (f64, f64),
    n_cells: usize,
    degree: usize,
    output_times: &'a [f64],
    dt: StepStats,
    limiter: LimiterStats,
}

impl SolutionRecord {
    pub fn snapshot(&self, i: usize) -> PolyField {
        PolyField::new(self.grid.clone(), self.snapshots[i].clone()).expect("snapshot length")
    }

    pub fn last(&self) -> PolyField {
        self.snapshot(self.snapshots.len() - 1)
    }

    pub fn step_stats(&self) -> StepStats {
        let n = self.dt_history.len();
        if n == 0 {
            return StepStats {
                steps: 0,
                dt_min: 0.0,
                dt_max: 0.0,
                dt_mean: 0.0,
            };
        }
        StepStats {
            steps: n,
            dt_min: self.dt_history.iter().copied().fold(f64::INFINITY, f64::min),
            dt_max: self.dt_history.iter().copied().fold(0.0, f64::max),
            dt_mean: self.dt_history.iter().sum::<f64>() / n as f64,
        }
    }

    /// Rows `t,x,rho` at every node of every snapshot.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "rho"])?;
        let xs = self.grid.node_positions();
        for (t, snap) in self.times.iter().zip(&self.snapshots) {
            for (x, r) in xs.iter().zip(snap) {
                w.write_record([t.to_string(), x.to_string(), r.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn metadata_json(&self) -> Result<serde_json::Value> {
        let meta = RecordMeta {
            params: &self.params,
            config: &self.config,
            domain: (self.grid.left(), self.grid.right()),
            n_cells: self.grid.n_cells(),
            degree: self.grid.degree(),
            output_times: &self.times,
            dt: self.step_stats(),
            limiter: self.limiter,
        };
        Ok(serde_json::to_value(meta)?)
    }

    pub fn save(&self, csv_path: &Path, json_path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(csv_path)?)?;
        let meta = self.metadata_json()?;
        std::fs::write(json_path, serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }
}

impl LdgSolver {
    /// Run from `initial` at `t0` to `tf`, recording the state at each of
    /// `output_times` (or only at `tf` when empty).
    pub fn simulate(&self, initial: &PolyField, t0: f64, tf: f64, output_times: &[f64]) -> Result<SolutionRecord> {
        if !(tf > t0) {
            return Err(Error::param("tf", format!("final time {tf} must exceed start {t0}")));
        }
        if !Arc::ptr_eq(initial.grid(), self.grid()) && **initial.grid() != **self.grid() {
            return Err(Error::param("initial", "initial field lives on a different grid"));
        }
        let mut outputs: Vec<f64> = if output_times.is_empty() {
            vec![tf]
        } else {
            output_times.to_vec()
        };
        outputs.sort_by(f64::total_cmp);
        outputs.dedup();
        if outputs.iter().any(|&s| s < t0 || s > tf || !s.is_finite()) {
            return Err(Error::param("output_times", format!("must lie in [{t0}, {tf}]")));
        }
        let eps = 1e-13 * tf.abs().max(t0.abs()).max(1.0);
        let mut record = SolutionRecord {
            grid: self.grid().clone(),
            params: self.params().clone(),
            config: self.config().clone(),
            times: Vec::with_capacity(outputs.len()),
            snapshots: Vec::with_capacity(outputs.len()),
            dt_history: Vec::new(),
            limiter: LimiterStats::default(),
        };
        let mut rho = initial.clone();
        let mut t = t0;
        let fail = |t: f64, steps: usize, reason: String, last: &PolyField| {
            Error::Diverged(Box::new(SimulationFailure {
                t,
                steps,
                reason,
                last_valid: Some((t, last.coeffs().to_vec())),
            }))
        };
        for &target in &outputs {
            while target - t > eps {
                if record.dt_history.len() >= self.config().max_steps {
                    return Err(fail(t, record.dt_history.len(), "step limit reached".into(), &rho));
                }
                let res = self.residual(&rho, t);
                if !(res.alpha.is_finite() && res.diffusivity.is_finite()) {
                    return Err(fail(t, record.dt_history.len(), "non-finite wave speed".into(), &rho));
                }
                let remaining = target - t;
                let mut dt = self.stable_dt(&res, remaining);
                if remaining - dt <= eps {
                    dt = remaining;
                }
                let next = self.step_from(&rho, res, t, dt, &mut record.limiter)?;
                if !next.is_finite() || next.coeffs().iter().any(|v| v.abs() > 1e6) {
                    return Err(fail(t, record.dt_history.len(), "state blew up".into(), &rho));
                }
                rho = next;
                t = if dt == remaining { target } else { t + dt };
                record.dt_history.push(dt);
            }
            record.times.push(target);
            record.snapshots.push(rho.coeffs().to_vec());
        }
        Ok(record)
    }
}

/// Build a solver and run it; see [`LdgSolver::simulate`].
pub fn simulate(
    initial: &PolyField,
    params: &ModelParams,
    bc: &BoundaryCondition,
    config: &SolverConfig,
    t0: f64,
    tf: f64,
    output_times: &[f64],
) -> Result<SolutionRecord> {
    let solver = LdgSolver::new(initial.grid().clone(), params.clone(), bc.clone(), config.clone())?;
    solver.simulate(initial, t0, tf, output_times)
}
