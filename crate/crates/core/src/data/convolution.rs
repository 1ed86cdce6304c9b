use rayon::prelude::*;
use serde::Serialize;

use super::NormalizedDataset;
use crate::grid_basis::QuadratureRule;
use crate::model::{convolve, perceived_density, Kernel, SaturationParams};
use crate::{Error, Result};

/// Convolved perceived density at the samples whose look-ahead window lies
/// inside the observed section. Those samples form a prefix of the
/// positions since positions are sorted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalConvolution {
    pub gamma: f64,
    /// Positions `0..n_retained` satisfy `x_j < x_n − γ`.
    pub n_retained: usize,
    /// `values[i][j]` for time `i` and retained position `j`.
    pub values: Vec<Vec<f64>>,
}

impl EmpiricalConvolution {
    pub fn is_retained(&self, j: usize) -> bool {
        j < self.n_retained
    }
}

/// Perceived density from the observed density and gradient, interpolated
/// linearly between positions and integrated against the kernel with
/// Gauss-Legendre quadrature on each piece of the window.
pub fn empirical_convolution(
    ds: &NormalizedDataset,
    kappa: f64,
    saturation: &SaturationParams,
    kernel: &Kernel,
) -> Result<EmpiricalConvolution> {
    let xs = &ds.positions;
    let n = xs.len();
    let length = xs[n - 1] - xs[0];
    let gamma = kernel.gamma();
    if gamma >= length {
        return Err(Error::param(
            "gamma",
            format!("look-ahead {gamma} is not shorter than the section {length}"),
        ));
    }
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::param("kappa", format!("must lie in [0, 1], got {kappa}")));
    }
    let limit = xs[n - 1] - gamma;
    let n_retained = xs.iter().take_while(|&&x| x < limit).count();
    let rule = QuadratureRule::gauss_legendre(6)?;
    let values = (0..ds.n_times())
        .into_par_iter()
        .map(|i| {
            let hat: Vec<f64> = ds.rho[i]
                .iter()
                .zip(&ds.drho[i])
                .map(|(&r, &d)| perceived_density(r, d, kappa, saturation))
                .collect();
            (0..n_retained)
                .map(|j| convolve(kernel, &rule, xs[j], xs, |y| interpolate(xs, &hat, y)))
                .collect()
        })
        .collect();
    Ok(EmpiricalConvolution {
        gamma,
        n_retained,
        values,
    })
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let k = xs.partition_point(|&p| p <= x).clamp(1, xs.len() - 1);
    let (x0, x1) = (xs[k - 1], xs[k]);
    let s = ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
    ys[k - 1] + s * (ys[k] - ys[k - 1])
}
