use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{band_objective, empirical_bands, fd_metrics, fitted_bands, predict_with, FDParams, FdFit};
use crate::data::{empirical_convolution, BinConfig, NormalizedDataset};
use crate::model::{Kernel, SaturationParams, VelocityFn};
use crate::{Error, Result};

/// Cartesian search grid of the brute-force Newell calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewellGrid {
    pub v: Vec<f64>,
    pub c: Vec<f64>,
    pub kappa: Vec<f64>,
    pub saturation: Vec<SaturationParams>,
}

impl Default for NewellGrid {
    fn default() -> Self {
        Self {
            v: (1..=40).map(|i| 0.05 * i as f64).collect(),
            c: (1..=20).map(|i| 0.05 * i as f64).collect(),
            kappa: default_kappas(),
            saturation: vec![SaturationParams::default()],
        }
    }
}

/// `0.0, 0.1, …, 1.0`
pub(crate) fn default_kappas() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

impl NewellGrid {
    pub fn len(&self) -> usize {
        self.v.len() * self.c.len() * self.kappa.len() * self.saturation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

struct Candidate {
    objective: f64,
    kappa: f64,
    c: f64,
    v: f64,
    sat: usize,
}

/// Objective first, then smallest κ, c, v and saturation index.
fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    a.objective
        .total_cmp(&b.objective)
        .then(a.kappa.total_cmp(&b.kappa))
        .then(a.c.total_cmp(&b.c))
        .then(a.v.total_cmp(&b.v))
        .then(a.sat.cmp(&b.sat))
}

/// Evaluate the band objective at every grid point and return the best.
pub fn calibrate_newell(ds: &NormalizedDataset, kernel: &Kernel, grid: &NewellGrid, bins: &BinConfig) -> Result<FdFit> {
    if grid.is_empty() {
        return Err(Error::Calibration("empty search grid".into()));
    }
    let mut best: Option<Candidate> = None;
    let mut evaluated = 0;
    let mut empirical = None;
    for (s, sat) in grid.saturation.iter().enumerate() {
        for &kappa in &grid.kappa {
            let conv = empirical_convolution(ds, kappa, sat, kernel)?;
            let emp = match &empirical {
                Some(e) => e,
                None => empirical.insert(empirical_bands(ds, conv.n_retained, bins)?),
            };
            let pairs: Vec<(f64, f64)> = grid.c.iter().flat_map(|&c| grid.v.iter().map(move |&v| (c, v))).collect();
            let found: Vec<Candidate> = pairs
                .par_iter()
                .filter_map(|&(c, v)| {
                    let vel = VelocityFn::newell(v, c, bins.rho_max).ok()?;
                    let flows = predict_with(ds, &conv, &vel);
                    let fitted = fitted_bands(ds, &flows, bins).ok()?;
                    let objective = band_objective(emp, &fitted).ok()?;
                    Some(Candidate {
                        objective,
                        kappa,
                        c,
                        v,
                        sat: s,
                    })
                })
                .collect();
            evaluated += found.len();
            if let Some(b) = found.into_iter().min_by(rank) {
                if best.as_ref().is_none_or(|cur| rank(&b, cur) == Ordering::Less) {
                    best = Some(b);
                }
            }
        }
    }
    let best = best.ok_or_else(|| Error::Calibration("no grid point gave a valid objective".into()))?;
    let params = FDParams {
        velocity: VelocityFn::newell(best.v, best.c, bins.rho_max)?,
        kappa: best.kappa,
        saturation: grid.saturation[best.sat],
        kernel: kernel.clone(),
    };
    let conv = empirical_convolution(ds, params.kappa, &params.saturation, kernel)?;
    let fitted = fitted_bands(ds, &predict_with(ds, &conv, &params.velocity), bins)?;
    let empirical = empirical.expect("set with the first candidate");
    log::info!(
        "newell fit: v = {}, c = {}, kappa = {}, objective = {:.6} ({evaluated} points)",
        best.v,
        best.c,
        best.kappa,
        best.objective
    );
    Ok(FdFit {
        metrics: fd_metrics(&empirical, &fitted)?,
        params,
        objective: best.objective,
        empirical,
        fitted,
        evaluated,
        fallback: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::KernelShape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Density varying in space and time with speeds from the generator.
    fn synthetic(v: f64, c: f64, kappa: f64, kernel: &Kernel) -> NormalizedDataset {
        let nx = 81;
        let xs: Vec<f64> = (0..nx).map(|j| j as f64 / (nx - 1) as f64).collect();
        let rho: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                xs.iter()
                    .map(|x| 0.5 + 0.45 * (3.0 * x + 0.7 * i as f64).sin() * (0.5 + 0.5 * (0.3 * i as f64).cos()))
                    .collect()
            })
            .collect();
        let times: Vec<f64> = (0..12).map(f64::from).collect();
        let u0 = vec![vec![1.0; nx]; 12];
        let ds = NormalizedDataset::from_fields(times.clone(), xs.clone(), rho.clone(), u0).unwrap();
        let conv = empirical_convolution(&ds, kappa, &SaturationParams::default(), kernel).unwrap();
        let vel = VelocityFn::newell(v, c, 1.0).unwrap();
        // speeds beyond the retained prefix do not enter the bands
        let u: Vec<Vec<f64>> = (0..12)
            .map(|i| (0..nx).map(|j| if j < conv.n_retained { vel.eval(conv.values[i][j]) } else { 0.5 }).collect())
            .collect();
        NormalizedDataset::from_fields(times, xs, rho, u).unwrap()
    }

    #[test]
    fn recovers_generating_parameters() {
        let kernel = Kernel::new(KernelShape::Linear, 0.1).unwrap();
        let ds = synthetic(1.8, 0.1, 0.3, &kernel);
        let grid = NewellGrid {
            v: vec![1.0, 1.4, 1.8, 2.2],
            c: vec![0.05, 0.1, 0.2, 0.4],
            kappa: default_kappas(),
            ..Default::default()
        };
        let fit = calibrate_newell(&ds, &kernel, &grid, &BinConfig::default()).unwrap();
        assert_eq!(fit.params.velocity, VelocityFn::newell(1.8, 0.1, 1.0).unwrap());
        assert_eq!(fit.params.kappa, 0.3);
        assert!(fit.objective < 1e-12);
        assert!(fit.metrics.accuracy.unwrap() > 99.999);
        assert!(fit.metrics.coverage.unwrap() > 99.999);
    }

    #[test]
    fn singleton_grid_returns_its_point() {
        let kernel = Kernel::new(KernelShape::Exponential, 0.05).unwrap();
        let ds = synthetic(1.0, 0.3, 0.5, &kernel);
        let grid = NewellGrid {
            v: vec![2.0],
            c: vec![0.7],
            kappa: vec![0.9],
            ..Default::default()
        };
        let fit = calibrate_newell(&ds, &kernel, &grid, &BinConfig::default()).unwrap();
        assert_eq!(fit.params.velocity, VelocityFn::newell(2.0, 0.7, 1.0).unwrap());
        assert_eq!(fit.params.kappa, 0.9);
        assert_eq!(fit.evaluated, 1);
    }

    #[test]
    fn winner_beats_random_grid_points_and_order_does_not_matter() {
        let kernel = Kernel::new(KernelShape::Quadratic, 0.1).unwrap();
        let ds = synthetic(1.3, 0.25, 0.2, &kernel);
        let grid = NewellGrid {
            v: vec![0.8, 1.0, 1.2, 1.4, 1.6],
            c: vec![0.1, 0.2, 0.3, 0.4],
            kappa: vec![0.0, 0.1, 0.3, 0.5],
            ..Default::default()
        };
        let bins = BinConfig::default();
        let fit = calibrate_newell(&ds, &kernel, &grid, &bins).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let emp = fit.empirical.clone();
        for _ in 0..100 {
            let v = grid.v[rng.random_range(0..grid.v.len())];
            let c = grid.c[rng.random_range(0..grid.c.len())];
            let kappa = grid.kappa[rng.random_range(0..grid.kappa.len())];
            let conv = empirical_convolution(&ds, kappa, &SaturationParams::default(), &kernel).unwrap();
            let flows = predict_with(&ds, &conv, &VelocityFn::newell(v, c, 1.0).unwrap());
            let obj = band_objective(&emp, &fitted_bands(&ds, &flows, &bins).unwrap()).unwrap();
            assert!(fit.objective <= obj);
        }
        let mut reversed = grid.clone();
        reversed.v.reverse();
        reversed.c.reverse();
        reversed.kappa.reverse();
        let again = calibrate_newell(&ds, &kernel, &reversed, &bins).unwrap();
        assert_eq!(again.params, fit.params);
        assert_eq!(again.objective, fit.objective);
    }

    #[test]
    fn ties_resolved_by_smallest_kappa() {
        // with a constant profile the gradient vanishes and κ has no effect
        let xs: Vec<f64> = (0..21).map(|j| j as f64 / 20.0).collect();
        let vel = VelocityFn::newell(1.0, 0.5, 1.0).unwrap();
        let u = vel.eval(0.6);
        let ds = NormalizedDataset::from_fields(vec![0.0, 1.0], xs, vec![vec![0.6; 21]; 2], vec![vec![u; 21]; 2]).unwrap();
        let kernel = Kernel::new(KernelShape::Linear, 0.2).unwrap();
        let grid = NewellGrid {
            v: vec![1.0],
            c: vec![0.5],
            kappa: vec![0.7, 0.2, 0.4],
            ..Default::default()
        };
        let fit = calibrate_newell(&ds, &kernel, &grid, &BinConfig::default()).unwrap();
        assert_eq!(fit.params.kappa, 0.2);
    }

    #[test]
    fn invalid_grids_rejected() {
        let kernel = Kernel::new(KernelShape::Linear, 0.2).unwrap();
        let ds = synthetic(1.0, 0.5, 0.0, &kernel);
        let empty = NewellGrid {
            v: vec![],
            ..Default::default()
        };
        assert!(calibrate_newell(&ds, &kernel, &empty, &BinConfig::default()).is_err());
        let bad = NewellGrid {
            v: vec![-1.0],
            c: vec![0.5],
            kappa: vec![0.0],
            ..Default::default()
        };
        assert!(calibrate_newell(&ds, &kernel, &bad, &BinConfig::default()).is_err());
    }
}
