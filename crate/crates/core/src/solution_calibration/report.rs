use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{Scenario, VariantFit};
use crate::model::{FluxVariant, KernelShape};
use crate::Result;

pub const TABLE_HEADER: [&str; 9] = ["Dataset", "Scenario", "Kernel", "Model", "gamma", "kappa", "MSR", "v_max", "c"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub dataset: String,
    pub scenario: String,
    pub kernel: KernelShape,
    pub model: FluxVariant,
    /// Only for the nonlocal model.
    pub gamma: Option<f64>,
    pub kappa: f64,
    pub msr: f64,
    pub v_max: f64,
    pub c: f64,
}

impl ComparisonRow {
    /// Column label used in the profile exports.
    pub fn label(&self) -> String {
        match self.gamma {
            Some(g) => format!("{}_gamma_{g}", self.model.name()),
            None => self.model.name().to_string(),
        }
    }
}

/// Calibrated variants side by side, with their solutions on the data grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub positions: Vec<f64>,
    pub times: Vec<f64>,
    pub truth: Vec<Vec<f64>>,
    pub solutions: Vec<Vec<Vec<f64>>>,
}

/// One row per fit, in the given order.
pub fn compare_models(
    scenario: &Scenario,
    fits: &[VariantFit],
    kernel: KernelShape,
    dataset: &str,
    scenario_name: &str,
) -> ComparisonReport {
    let rows = fits
        .iter()
        .map(|f| ComparisonRow {
            dataset: dataset.into(),
            scenario: scenario_name.into(),
            kernel,
            model: f.params.flux,
            gamma: (f.params.flux == FluxVariant::Nonlocal).then(|| f.params.gamma()),
            kappa: f.params.kappa,
            msr: f.msr,
            v_max: f.v,
            c: f.c,
        })
        .collect();
    ComparisonReport {
        rows,
        positions: scenario.positions.clone(),
        times: scenario.times.clone(),
        truth: scenario.truth.clone(),
        solutions: fits.iter().map(|f| f.solution.clone()).collect(),
    }
}

/// MSR to six decimals, κ to one.
pub fn write_table<W: Write>(rows: &[ComparisonRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TABLE_HEADER)?;
    for r in rows {
        w.write_record([
            r.dataset.clone(),
            r.scenario.clone(),
            r.kernel.name().to_string(),
            r.model.name().to_string(),
            r.gamma.map_or_else(String::new, |g| g.to_string()),
            format!("{:.1}", r.kappa),
            format!("{:.6}", r.msr),
            r.v_max.to_string(),
            r.c.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

impl ComparisonReport {
    fn write_slice<W: Write>(&self, i: usize, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["x".to_string(), "truth".to_string()];
        header.extend(self.rows.iter().map(|r| r.label()));
        w.write_record(&header)?;
        for (j, x) in self.positions.iter().enumerate() {
            let mut rec = vec![x.to_string(), self.truth[i][j].to_string()];
            rec.extend(self.solutions.iter().map(|s| s[i][j].to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Measured and simulated profiles at the last time.
    pub fn write_final_profiles<W: Write>(&self, out: W) -> Result<()> {
        self.write_slice(self.times.len() - 1, out)
    }

    /// One `snapshot_NNNN.csv` per data time in `dir`.
    pub fn write_snapshots(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::with_capacity(self.times.len());
        for i in 0..self.times.len() {
            let path = dir.join(format!("snapshot_{i:04}.csv"));
            self.write_slice(i, std::fs::File::create(&path)?)?;
            paths.push(path);
        }
        let mut w = csv::Writer::from_path(dir.join("times.csv"))?;
        w.write_record(["index", "t"])?;
        for (i, t) in self.times.iter().enumerate() {
            w.write_record([i.to_string(), t.to_string()])?;
        }
        w.flush()?;
        Ok(paths)
    }
}
