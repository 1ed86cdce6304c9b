use std::io::Write;

use serde::Serialize;

use super::{FdFit, FDParams};
use crate::data::NormalizedDataset;
use crate::model::KernelShape;
use crate::Result;

pub const FD_TABLE_HEADER: [&str; 6] = ["Model", "Kernel", "gamma", "kappa", "coverage", "accuracy"];

/// One line of the calibration summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdTableRow {
    pub model: String,
    pub kernel: KernelShape,
    pub gamma: f64,
    pub kappa: f64,
    pub coverage: Option<f64>,
    pub accuracy: Option<f64>,
}

impl FdTableRow {
    pub fn from_fit(fit: &FdFit) -> Self {
        Self {
            model: "Nonlocal".into(),
            kernel: fit.params.kernel.shape(),
            gamma: fit.params.kernel.gamma(),
            kappa: fit.params.kappa,
            coverage: fit.metrics.coverage,
            accuracy: fit.metrics.accuracy,
        }
    }
}

fn percent(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |p| format!("{p:.0}"))
}

/// Percentages rounded to whole numbers, κ to one decimal.
pub fn write_fd_table<W: Write>(rows: &[FdTableRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FD_TABLE_HEADER)?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.kernel.name().to_string(),
            r.gamma.to_string(),
            format!("{:.1}", r.kappa),
            percent(r.coverage),
            percent(r.accuracy),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Upper and lower bands of one bin for both sides; absent for empty bins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandRow {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub empirical_plus: Option<f64>,
    pub empirical_minus: Option<f64>,
    pub fitted_plus: Option<f64>,
    pub fitted_minus: Option<f64>,
}

/// Serializable record of a calibration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdReport {
    pub model: String,
    pub velocity_family: String,
    pub kernel: KernelShape,
    pub gamma: f64,
    pub kappa: f64,
    pub params: FDParams,
    pub objective: f64,
    pub accuracy: Option<f64>,
    pub coverage: Option<f64>,
    pub fallback: bool,
    pub evaluated: usize,
    pub bands: Vec<BandRow>,
}

impl FdReport {
    pub fn new(fit: &FdFit, velocity_family: &str) -> Self {
        let e = &fit.empirical;
        let f = &fit.fitted;
        let bands = e
            .bins
            .iter()
            .zip(&f.bins)
            .enumerate()
            .map(|(m, (eb, fb))| BandRow {
                bin_lo: e.edges[m],
                bin_hi: e.edges[m + 1],
                empirical_plus: eb.map(|b| b.plus),
                empirical_minus: eb.map(|b| b.minus),
                fitted_plus: fb.map(|b| b.plus),
                fitted_minus: fb.map(|b| b.minus),
            })
            .collect();
        Self {
            model: "Nonlocal".into(),
            velocity_family: velocity_family.into(),
            kernel: fit.params.kernel.shape(),
            gamma: fit.params.kernel.gamma(),
            kappa: fit.params.kappa,
            params: fit.params.clone(),
            objective: fit.objective,
            accuracy: fit.metrics.accuracy,
            coverage: fit.metrics.coverage,
            fallback: fit.fallback,
            evaluated: fit.evaluated,
            bands,
        }
    }
}

/// Rows `rho,q,q_pred` for every retained sample, for plotting the
/// measured and fitted diagrams together.
pub fn write_prediction_csv<W: Write>(ds: &NormalizedDataset, flows: &[Vec<f64>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rho", "q", "q_pred"])?;
    for ((rho, q), pred) in ds.rho.iter().zip(&ds.q).zip(flows) {
        for (j, p) in pred.iter().enumerate() {
            w.write_record([rho[j].to_string(), q[j].to_string(), p.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_layout() {
        let rows = [
            FdTableRow {
                model: "Nonlocal".into(),
                kernel: KernelShape::Exponential,
                gamma: 0.004,
                kappa: 0.6,
                coverage: Some(85.2),
                accuracy: Some(80.7),
            },
            FdTableRow {
                model: "Nonlocal".into(),
                kernel: KernelShape::Linear,
                gamma: 0.3,
                kappa: 0.0,
                coverage: None,
                accuracy: Some(81.0),
            },
        ];
        let mut buf = Vec::new();
        write_fd_table(&rows, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "Model,Kernel,gamma,kappa,coverage,accuracy\nNonlocal,exp,0.004,0.6,85,81\nNonlocal,linear,0.3,0.0,NA,81\n"
        );
    }
}
