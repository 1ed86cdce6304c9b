use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{band_objective, empirical_bands, fd_metrics, fitted_bands, predict_with, Band, FDParams, FdFit};
use crate::data::{bin_samples, empirical_convolution, BinConfig, BinStats, EmpiricalConvolution, NormalizedDataset};
use crate::model::{CubicSpline, Kernel, SaturationParams, VelocityFn};
use crate::{Error, Result};

/// Size of the greedy control-point search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplineSearch {
    /// Control points `n`, equally spaced in density.
    pub control_points: usize,
    /// Speed levels `N`; the options are `j/N · v_max`.
    pub levels: usize,
}

impl Default for SplineSearch {
    fn default() -> Self {
        Self {
            control_points: 6,
            levels: 100,
        }
    }
}

const MONOTONE_SAMPLES: usize = 1000;

/// Greedy left-to-right choice of control speeds for a fixed κ: each speed
/// is picked from the options below its predecessor so that the bins of
/// its density interval match best, using linear interpolation between
/// control points. The result is the clamped cubic spline through the
/// chosen points with the last speed set to zero.
pub fn calibrate_spline(
    ds: &NormalizedDataset,
    kernel: &Kernel,
    kappa: f64,
    saturation: &SaturationParams,
    search: SplineSearch,
    bins: &BinConfig,
) -> Result<FdFit> {
    let n = search.control_points;
    let big_n = search.levels;
    if n < 2 {
        return Err(Error::param("control_points", "need at least 2"));
    }
    if big_n < n {
        return Err(Error::param("levels", format!("need at least {n} speed levels, got {big_n}")));
    }
    let conv = empirical_convolution(ds, kappa, saturation, kernel)?;
    let empirical = empirical_bands(ds, conv.n_retained, bins)?;
    let (v_max, mut fallback) = first_bin_speed(ds, conv.n_retained, bins)?;
    let rho_max = bins.rho_max;
    let rho_i: Vec<f64> = (0..n).map(|i| i as f64 * rho_max / (n - 1) as f64).collect();
    let mut v = vec![0.0; n];
    v[0] = v_max;
    let options: Vec<f64> = (0..=big_n).map(|j| j as f64 / big_n as f64 * v_max).collect();
    let edges = bins.edges();
    let tol = 1e-12 * rho_max;

    for i in 0..n - 1 {
        let lower = (n - 1 - i) as f64 / big_n as f64 * v_max;
        // bins inside [ρ_i, ρ_{i+1}); the last interval is closed
        let in_segment: Vec<usize> = (0..bins.bins)
            .filter(|&m| edges[m] >= rho_i[i] - tol && edges[m + 1] <= rho_i[i + 1] + tol)
            .collect();
        let candidates: Vec<f64> = options.iter().copied().filter(|&o| o >= lower && o < v[i]).collect();
        let scored: Vec<(f64, f64)> = candidates
            .par_iter()
            .filter_map(|&cand| {
                let mut pts: Vec<(f64, f64)> = (0..=i).map(|k| (rho_i[k], v[k])).collect();
                pts.push((rho_i[i + 1], cand));
                if i + 2 < n && !stays_monotone(&pts, (rho_max, 0.0)) {
                    return None;
                }
                let vel = VelocityFn::piecewise_linear(&pts).ok()?;
                Some((segment_objective(ds, &conv, &vel, bins, &empirical.bins, &in_segment), cand))
            })
            .collect();
        // strict improvement keeps the first (smallest) candidate on ties
        let mut best: Option<(f64, f64)> = None;
        for (d, cand) in scored {
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, cand));
            }
        }
        v[i + 1] = match best {
            Some((_, cand)) => cand,
            None => {
                fallback = true;
                log::warn!("no admissible speed for control point {}; repeating {}", i + 1, v[i]);
                v[i]
            }
        };
    }
    v[n - 1] = 0.0;

    let points: Vec<(f64, f64)> = rho_i.iter().copied().zip(v.iter().copied()).collect();
    let velocity = VelocityFn::cubic_spline(&points)?;
    if !velocity.is_nonincreasing(rho_max, MONOTONE_SAMPLES, 1e-12) {
        fallback = true;
        log::warn!("final spline is not monotone");
    }
    let flows = predict_with(ds, &conv, &velocity);
    let fitted = fitted_bands(ds, &flows, bins)?;
    Ok(FdFit {
        objective: band_objective(&empirical, &fitted)?,
        metrics: fd_metrics(&empirical, &fitted)?,
        params: FDParams {
            velocity,
            kappa,
            saturation: *saturation,
            kernel: kernel.clone(),
        },
        empirical,
        fitted,
        evaluated: 0,
        fallback,
    })
}

/// Run [`calibrate_spline`] for every κ and keep the best (smallest κ on
/// ties).
pub fn calibrate_spline_sweep(
    ds: &NormalizedDataset,
    kernel: &Kernel,
    kappas: &[f64],
    saturation: &SaturationParams,
    search: SplineSearch,
    bins: &BinConfig,
) -> Result<FdFit> {
    let mut best: Option<FdFit> = None;
    let mut order: Vec<f64> = kappas.to_vec();
    order.sort_by(f64::total_cmp);
    order.dedup();
    for kappa in order {
        let mut fit = calibrate_spline(ds, kernel, kappa, saturation, search, bins)?;
        fit.evaluated = kappas.len();
        if best.as_ref().is_none_or(|b| fit.objective < b.objective) {
            best = Some(fit);
        }
    }
    best.ok_or_else(|| Error::Calibration("empty κ grid".into()))
}

/// Mean observed speed in the lowest density bin. When that bin is empty the
/// lowest populated bin is used and the fallback flag is raised.
fn first_bin_speed(ds: &NormalizedDataset, nr: usize, bins: &BinConfig) -> Result<(f64, bool)> {
    let speeds = bin_samples(
        bins,
        ds.rho
            .iter()
            .zip(&ds.u)
            .flat_map(|(r, u)| r[..nr].iter().copied().zip(u[..nr].iter().copied())),
    )?;
    let (m, stats) = speeds
        .bins
        .iter()
        .enumerate()
        .find_map(|(m, b)| Some((m, b.stats?)))
        .ok_or_else(|| Error::Calibration("no samples in any bin".into()))?;
    if !(stats.mean > 0.0) {
        return Err(Error::Calibration("observed free-flow speed is zero".into()));
    }
    Ok((stats.mean, m != 0))
}

/// The clamped cubic through `pts` and the end point has no increase.
fn stays_monotone(pts: &[(f64, f64)], end: (f64, f64)) -> bool {
    let mut all = pts.to_vec();
    all.push(end);
    CubicSpline::clamped(&all).is_ok_and(|s| s.is_nonincreasing(200, 1e-12))
}

fn segment_objective(
    ds: &NormalizedDataset,
    conv: &EmpiricalConvolution,
    vel: &VelocityFn,
    bins: &BinConfig,
    empirical: &[Option<Band>],
    in_segment: &[usize],
) -> f64 {
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); bins.bins];
    for (rho, r) in ds.rho.iter().zip(&conv.values) {
        for (&p, &c) in rho.iter().zip(r) {
            if let Some(m) = bins.index(p) {
                if in_segment.contains(&m) {
                    groups[m].push(p * vel.eval(c));
                }
            }
        }
    }
    let mut d = 0.0;
    for &m in in_segment {
        let (Some(e), Some(f)) = (empirical[m], band_of(&groups[m], bins)) else {
            continue;
        };
        d += (f.plus - e.plus).abs() + (f.minus - e.minus).abs();
    }
    d
}

fn band_of(values: &[f64], bins: &BinConfig) -> Option<Band> {
    BinStats::of(values, bins.sd).map(|st| Band {
        plus: st.mean + st.sd,
        minus: st.mean - st.sd,
    })
}
