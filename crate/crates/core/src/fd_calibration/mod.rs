//! Calibration of the density-flow relation by matching per-bin flow bands
//! (mean ± standard deviation) of the model against the measurements.

mod newell;
mod report;
mod spline;

use serde::{Deserialize, Serialize};

pub use newell::{calibrate_newell, NewellGrid};
pub use report::{write_fd_table, write_prediction_csv, BandRow, FdReport, FdTableRow, FD_TABLE_HEADER};
pub use spline::{calibrate_spline, calibrate_spline_sweep, SplineSearch};

use crate::data::{bin_samples, empirical_convolution, BinConfig, BinSummary, EmpiricalConvolution, NormalizedDataset};
use crate::model::{Kernel, ModelParams, SaturationParams, VelocityFn};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Empirical,
    Fitted,
}

/// Upper and lower band of one bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub plus: f64,
    pub minus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bands {
    pub provenance: Provenance,
    pub edges: Vec<f64>,
    /// `None` for empty bins.
    pub bins: Vec<Option<Band>>,
}

impl Bands {
    pub fn from_summary(summary: &BinSummary, provenance: Provenance) -> Self {
        let mut edges: Vec<f64> = summary.bins.iter().map(|b| b.lo).collect();
        edges.extend(summary.bins.last().map(|b| b.hi));
        let bins = summary
            .bins
            .iter()
            .map(|b| {
                b.stats.map(|s| Band {
                    plus: s.mean + s.sd,
                    minus: s.mean - s.sd,
                })
            })
            .collect();
        Self {
            provenance,
            edges,
            bins,
        }
    }

    /// Bands of `(density, value)` samples under `config`.
    pub fn from_samples<I>(config: &BinConfig, samples: I, provenance: Provenance) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        Ok(Self::from_summary(&bin_samples(config, samples)?, provenance))
    }

    pub fn non_empty(&self) -> usize {
        self.bins.iter().filter(|b| b.is_some()).count()
    }
}

/// Pairs of bins that are non-empty on both sides.
fn paired<'a>(empirical: &'a Bands, fitted: &'a Bands) -> Result<Vec<(Band, Band)>> {
    if empirical.edges != fitted.edges {
        return Err(Error::Calibration("bands use different bin partitions".into()));
    }
    let pairs: Vec<(Band, Band)> = empirical
        .bins
        .iter()
        .zip(&fitted.bins)
        .filter_map(|(e, f)| Some(((*e)?, (*f)?)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Calibration("no bin is populated in both band sets".into()));
    }
    Ok(pairs)
}

/// Total difference of the upper and lower bands over bins populated on
/// both sides.
pub fn band_objective(empirical: &Bands, fitted: &Bands) -> Result<f64> {
    Ok(paired(empirical, fitted)?
        .iter()
        .map(|(e, f)| (f.plus - e.plus).abs() + (f.minus - e.minus).abs())
        .sum())
}

/// Accuracy and coverage in percent; `None` when a denominator vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdMetrics {
    pub accuracy: Option<f64>,
    pub coverage: Option<f64>,
}

/// Accuracy `ε = 1 − Σ|Δb| / Σ(max b⁺ − min b⁻)` and coverage
/// `Σ = Σ(min b⁺ − max b⁻) / Σ(b⁺₀ − b⁻₀)`. Overlaps of disjoint bands enter
/// the coverage sum as negative terms.
pub fn fd_metrics(empirical: &Bands, fitted: &Bands) -> Result<FdMetrics> {
    let pairs = paired(empirical, fitted)?;
    let mut diff = 0.0;
    let mut hull = 0.0;
    let mut overlap = 0.0;
    let mut width = 0.0;
    for (e, f) in &pairs {
        diff += (f.plus - e.plus).abs() + (f.minus - e.minus).abs();
        hull += f.plus.max(e.plus) - f.minus.min(e.minus);
        overlap += f.plus.min(e.plus) - f.minus.max(e.minus);
        width += e.plus - e.minus;
    }
    Ok(FdMetrics {
        accuracy: (hull > 0.0).then(|| 100.0 * (1.0 - diff / hull)),
        coverage: (width > 0.0).then(|| 100.0 * overlap / width),
    })
}

/// Everything that fixes the predicted flow `ρ̃ U(R̃)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FDParams {
    pub velocity: VelocityFn,
    pub kappa: f64,
    pub saturation: SaturationParams,
    pub kernel: Kernel,
}

impl FDParams {
    pub fn to_model(&self) -> Result<ModelParams> {
        ModelParams::nonlocal(self.kernel.clone(), self.kappa, self.velocity.clone(), self.saturation)
    }
}

/// Predicted flow at the retained samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub convolution: EmpiricalConvolution,
    /// `flows[i][j]` for time `i` and retained position `j`.
    pub flows: Vec<Vec<f64>>,
}

pub fn predict_flow(ds: &NormalizedDataset, params: &FDParams) -> Result<Prediction> {
    let convolution = empirical_convolution(ds, params.kappa, &params.saturation, &params.kernel)?;
    let flows = predict_with(ds, &convolution, &params.velocity);
    Ok(Prediction { convolution, flows })
}

/// `ρ̃ U(R̃)` for an already computed convolution.
pub fn predict_with(ds: &NormalizedDataset, conv: &EmpiricalConvolution, velocity: &VelocityFn) -> Vec<Vec<f64>> {
    ds.rho
        .iter()
        .zip(&conv.values)
        .map(|(rho, r)| rho.iter().zip(r).map(|(&p, &c)| p * velocity.eval(c)).collect())
        .collect()
}

/// Observed flow bands over the retained samples.
pub fn empirical_bands(ds: &NormalizedDataset, n_retained: usize, config: &BinConfig) -> Result<Bands> {
    Bands::from_samples(config, retained_pairs(ds, n_retained, &ds.q), Provenance::Empirical)
}

pub fn fitted_bands(ds: &NormalizedDataset, flows: &[Vec<f64>], config: &BinConfig) -> Result<Bands> {
    let nr = flows.first().map_or(0, Vec::len);
    Bands::from_samples(config, retained_pairs(ds, nr, flows), Provenance::Fitted)
}

fn retained_pairs<'a>(
    ds: &'a NormalizedDataset,
    nr: usize,
    values: &'a [Vec<f64>],
) -> impl Iterator<Item = (f64, f64)> + 'a {
    ds.rho
        .iter()
        .zip(values)
        .flat_map(move |(r, v)| r[..nr].iter().copied().zip(v[..nr].iter().copied()))
}

/// Result of a band-matching calibration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdFit {
    pub params: FDParams,
    pub objective: f64,
    pub metrics: FdMetrics,
    pub empirical: Bands,
    pub fitted: Bands,
    /// Candidates whose objective was evaluated.
    pub evaluated: usize,
    /// The spline search had to repeat a control speed.
    pub fallback: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::KernelShape;
    use proptest::prelude::*;

    fn bands(v: &[Option<(f64, f64)>], provenance: Provenance) -> Bands {
        Bands {
            provenance,
            edges: (0..=v.len()).map(|m| m as f64 / v.len() as f64).collect(),
            bins: v.iter().map(|b| b.map(|(plus, minus)| Band { plus, minus })).collect(),
        }
    }

    #[test]
    fn identical_bands_are_perfect() {
        let e = bands(&[Some((0.4, 0.2)), None, Some((0.9, 0.3))], Provenance::Empirical);
        let f = Bands { provenance: Provenance::Fitted, ..e.clone() };
        assert_eq!(band_objective(&e, &f).unwrap(), 0.0);
        let m = fd_metrics(&e, &f).unwrap();
        assert_eq!(m.accuracy, Some(100.0));
        assert_eq!(m.coverage, Some(100.0));
    }

    #[test]
    fn shifted_bands_cost_two_delta_per_bin() {
        // dyadic values keep every difference exact
        let e = bands(&[Some((0.5, 0.25)), Some((0.75, 0.125)), None, Some((1.0, 0.5))], Provenance::Empirical);
        let mut f = e.clone();
        f.provenance = Provenance::Fitted;
        for b in f.bins.iter_mut().flatten() {
            b.plus += 0.0625;
            b.minus += 0.0625;
        }
        assert_eq!(band_objective(&e, &f).unwrap(), 2.0 * 3.0 * 0.0625);
    }

    #[test]
    fn half_width_inner_band_covers_half() {
        let e = bands(&[Some((1.0, 0.0))], Provenance::Empirical);
        let f = bands(&[Some((0.75, 0.25))], Provenance::Fitted);
        let m = fd_metrics(&e, &f).unwrap();
        assert!((m.coverage.unwrap() - 50.0).abs() < 1e-12);
        assert!((m.accuracy.unwrap() - 50.0).abs() < 1e-12);
    }

    #[test]
    fn empty_bins_skipped_and_no_overlap_rejected() {
        let e = bands(&[Some((1.0, 0.0)), None], Provenance::Empirical);
        let f = bands(&[Some((1.0, 0.0)), Some((5.0, 3.0))], Provenance::Fitted);
        assert_eq!(band_objective(&e, &f).unwrap(), 0.0);
        let g = bands(&[None, Some((5.0, 3.0))], Provenance::Fitted);
        assert!(band_objective(&e, &g).is_err());
        let other = bands(&[Some((1.0, 0.0)), None, None], Provenance::Fitted);
        assert!(fd_metrics(&e, &other).is_err());
    }

    #[test]
    fn disjoint_bands_give_negative_coverage() {
        let e = bands(&[Some((1.0, 0.0))], Provenance::Empirical);
        let f = bands(&[Some((3.0, 2.0))], Provenance::Fitted);
        assert!((fd_metrics(&e, &f).unwrap().coverage.unwrap() + 100.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_denominators_flagged() {
        let e = bands(&[Some((0.5, 0.5))], Provenance::Empirical);
        let m = fd_metrics(&e, &e).unwrap();
        assert_eq!(m.coverage, None);
        assert_eq!(m.accuracy, None);
    }

    fn dataset() -> NormalizedDataset {
        let xs: Vec<f64> = (0..41).map(|j| j as f64 / 40.0).collect();
        let rho: Vec<Vec<f64>> = (0..5)
            .map(|i| xs.iter().map(|x| 0.4 + 0.3 * (4.0 * x + i as f64).sin()).collect())
            .collect();
        let u = vec![vec![0.5; 41]; 5];
        NormalizedDataset::from_fields((0..5).map(f64::from).collect(), xs, rho, u).unwrap()
    }

    #[test]
    fn constant_speed_without_diffusion_predicts_v_rho() {
        let ds = dataset();
        let p = FDParams {
            velocity: VelocityFn::constant(0.7).unwrap(),
            kappa: 0.0,
            saturation: SaturationParams::default(),
            kernel: Kernel::new(KernelShape::Linear, 0.1).unwrap(),
        };
        let pred = predict_flow(&ds, &p).unwrap();
        for (i, row) in pred.flows.iter().enumerate() {
            for (j, q) in row.iter().enumerate() {
                assert!((q - 0.7 * ds.rho[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn constant_density_predicts_c_u_of_c() {
        let xs: Vec<f64> = (0..21).map(|j| j as f64 / 20.0).collect();
        let ds = NormalizedDataset::from_fields(vec![0.0, 1.0], xs, vec![vec![0.3; 21]; 2], vec![vec![1.0; 21]; 2]).unwrap();
        let vel = VelocityFn::newell(1.8, 0.1, 1.0).unwrap();
        let p = FDParams {
            velocity: vel.clone(),
            kappa: 0.5,
            saturation: SaturationParams::default(),
            kernel: Kernel::new(KernelShape::Exponential, 0.2).unwrap(),
        };
        let pred = predict_flow(&ds, &p).unwrap();
        for q in pred.flows.iter().flatten() {
            assert!((q - 0.3 * vel.eval(0.3)).abs() < 1e-9);
        }
    }

    fn arb_bands() -> impl Strategy<Value = (Vec<Option<(f64, f64)>>, Vec<Option<(f64, f64)>>)> {
        prop::collection::vec(
            (
                prop::option::weighted(0.9, (0.0f64..2.0, 0.0f64..1.0)),
                prop::option::weighted(0.9, (0.0f64..2.0, 0.0f64..1.0)),
            ),
            1..30,
        )
        .prop_map(|v| {
            let to = |b: Option<(f64, f64)>| b.map(|(mid, half)| (mid + half, mid - half));
            (v.iter().map(|p| to(p.0)).collect(), v.iter().map(|p| to(p.1)).collect())
        })
    }

    proptest! {
        #[test]
        fn objective_matches_resummation((e, f) in arb_bands()) {
            let (be, bf) = (bands(&e, Provenance::Empirical), bands(&f, Provenance::Fitted));
            let expect: f64 = e.iter().zip(&f).filter_map(|(a, b)| {
                let (a, b) = ((*a)?, (*b)?);
                Some((a.0 - b.0).abs() + (a.1 - b.1).abs())
            }).sum();
            match band_objective(&be, &bf) {
                Ok(v) => {
                    prop_assert!((v - expect).abs() <= 1e-12 * expect.max(1.0));
                    prop_assert!(v >= 0.0);
                    let m = fd_metrics(&be, &bf).unwrap();
                    if let Some(a) = m.accuracy {
                        prop_assert!(a <= 100.0);
                        prop_assert_eq!(a == 100.0, v == 0.0);
                    }
                }
                Err(_) => prop_assert!(e.iter().zip(&f).all(|(a, b)| a.is_none() || b.is_none())),
            }
        }

        #[test]
        fn scaling_flows_scales_objective((e, f) in arb_bands(), lambda in 0.01f64..100.0) {
            let scale = |v: &[Option<(f64, f64)>]| v.iter().map(|b| b.map(|(p, m)| (lambda * p, lambda * m))).collect::<Vec<_>>();
            let (be, bf) = (bands(&e, Provenance::Empirical), bands(&f, Provenance::Fitted));
            let (se, sf) = (bands(&scale(&e), Provenance::Empirical), bands(&scale(&f), Provenance::Fitted));
            if let Ok(v) = band_objective(&be, &bf) {
                let s = band_objective(&se, &sf).unwrap();
                prop_assert!((s - lambda * v).abs() <= 1e-10 * (lambda * v).max(1e-300) + 1e-12);
                let (m, ms) = (fd_metrics(&be, &bf).unwrap(), fd_metrics(&se, &sf).unwrap());
                if let (Some(a), Some(b)) = (m.accuracy, ms.accuracy) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }
}
