//! Preparation of measured speed and flow tables: ingestion, scaling to
//! dimensionless units, density gradients, smoothing, the empirical
//! convolution of the perceived density, and density bins of the
//! fundamental diagram.

mod bins;
mod convolution;
mod ingest;
mod profile;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use bins::{bin_samples, bin_summaries, Bin, BinConfig, BinStats, BinSummary, Regime, SdKind};
pub use convolution::{empirical_convolution, EmpiricalConvolution};
pub use ingest::{
    ingest_csv, read_measurements, LengthUnit, Measurement, RawMeasurementTable, SpeedUnit, TimeUnit, UnitDeclaration,
    MPH_TO_MPS,
};
pub use profile::{box_filter, finite_difference, total_variation};

use crate::{Error, Result};

/// Scaled speeds at or below this are treated as missing when deriving
/// density from flow.
pub const SPEED_FLOOR: f64 = 1e-6;

/// Factors that map the dimensionless dataset back to SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleFactors {
    /// Vehicles per meter.
    pub rho_max: f64,
    /// Meters per second.
    pub u_max: f64,
    pub x_origin: f64,
    /// Meters per unit of scaled position.
    pub length: f64,
    pub t_origin: f64,
}

impl ScaleFactors {
    pub fn identity() -> Self {
        Self {
            rho_max: 1.0,
            u_max: 1.0,
            x_origin: 0.0,
            length: 1.0,
            t_origin: 0.0,
        }
    }

    /// Seconds per unit of scaled time (`length / u_max`).
    pub fn time_scale(&self) -> f64 {
        self.length / self.u_max
    }

    pub fn raw_density(&self, rho: f64) -> f64 {
        rho * self.rho_max
    }

    pub fn raw_speed(&self, u: f64) -> f64 {
        u * self.u_max
    }

    pub fn raw_position(&self, x: f64) -> f64 {
        self.x_origin + x * self.length
    }

    pub fn raw_time(&self, t: f64) -> f64 {
        self.t_origin + t * self.time_scale()
    }
}

/// Measurements on a rectangular time × position grid in dimensionless
/// units. Row `i` of every array belongs to `times[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedDataset {
    /// Scaled times, starting at 0.
    pub times: Vec<f64>,
    /// Scaled positions in `[0, 1]`.
    pub positions: Vec<f64>,
    pub rho: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub drho: Vec<Vec<f64>>,
    /// Samples whose density was taken from the nearest valid time.
    pub imputed: Vec<Vec<bool>>,
    pub scale: ScaleFactors,
}

impl NormalizedDataset {
    /// Build from dimensionless density and speed arrays; flow and the
    /// density gradient are derived.
    pub fn from_fields(times: Vec<f64>, positions: Vec<f64>, rho: Vec<Vec<f64>>, u: Vec<Vec<f64>>) -> Result<Self> {
        let nt = times.len();
        let nx = positions.len();
        if nt < 1 || nx < 2 {
            return Err(Error::Data(format!("need at least one time and two positions, got {nt} × {nx}")));
        }
        if !strictly_increasing(&times) || !strictly_increasing(&positions) {
            return Err(Error::Data("times and positions must be strictly increasing".into()));
        }
        if rho.len() != nt || u.len() != nt || rho.iter().chain(&u).any(|r| r.len() != nx) {
            return Err(Error::Data(format!("arrays must be {nt} × {nx}")));
        }
        if rho.iter().flatten().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Data("scaled densities must lie in [0, 1]".into()));
        }
        if u.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Data("speeds must be finite and nonnegative".into()));
        }
        let mut ds = Self {
            times,
            positions,
            q: Vec::new(),
            drho: Vec::new(),
            imputed: vec![vec![false; nx]; nt],
            rho,
            u,
            scale: ScaleFactors::identity(),
        };
        ds.refresh_derived();
        Ok(ds)
    }

    fn refresh_derived(&mut self) {
        self.q = self
            .rho
            .iter()
            .zip(&self.u)
            .map(|(r, u)| r.iter().zip(u).map(|(a, b)| a * b).collect())
            .collect();
        self.drho = finite_diff_derivative(self);
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn n_positions(&self) -> usize {
        self.positions.len()
    }

    /// Copy with the density profile of every time smoothed by a moving
    /// average; flow and gradient are recomputed from the smoothed density.
    pub fn box_filtered(&self, radius: usize) -> Self {
        let mut out = self.clone();
        for r in &mut out.rho {
            *r = box_filter(r, radius);
        }
        out.refresh_derived();
        out
    }

    /// Rows `t,x,rho,u,q,drho,excluded`. A sample is excluded when it lies
    /// beyond the retained prefix of `conv`.
    pub fn write_csv<W: Write>(&self, out: W, conv: Option<&EmpiricalConvolution>) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "rho", "u", "q", "drho", "excluded"])?;
        let retained = conv.map_or(self.n_positions(), |c| c.n_retained);
        for (i, t) in self.times.iter().enumerate() {
            for (j, x) in self.positions.iter().enumerate() {
                w.write_record([
                    t.to_string(),
                    x.to_string(),
                    self.rho[i][j].to_string(),
                    self.u[i][j].to_string(),
                    self.q[i][j].to_string(),
                    self.drho[i][j].to_string(),
                    u8::from(j >= retained).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[1] > w[0])
}

/// Derive density from flow and speed, scale density and speed by their
/// observed maxima (unless the table opts out), map positions onto `[0, 1]`
/// and time onto `(t − t0) u_max / L`.
pub fn normalize(table: &RawMeasurementTable) -> Result<NormalizedDataset> {
    let rows = &table.rows;
    if rows.is_empty() {
        return Err(Error::Data("empty table".into()));
    }
    // split into time slices; rows are sorted by (t, x)
    let mut slices: Vec<&[Measurement]> = Vec::new();
    let mut start = 0;
    for i in 1..=rows.len() {
        if i == rows.len() || rows[i].t != rows[start].t {
            slices.push(&rows[start..i]);
            start = i;
        }
    }
    let xs: Vec<f64> = slices[0].iter().map(|m| m.x).collect();
    if slices.len() < 2 || xs.len() < 2 {
        return Err(Error::Data(format!(
            "need at least 2 times and 2 positions, got {} × {}",
            slices.len(),
            xs.len()
        )));
    }
    for s in &slices {
        if s.len() != xs.len() || s.iter().zip(&xs).any(|(m, x)| m.x != *x) {
            return Err(Error::Data(format!(
                "time {} does not observe the same positions as time {}",
                s[0].t, slices[0][0].t
            )));
        }
    }
    let nx = xs.len();
    let speed_max = rows.iter().map(|m| m.speed).fold(0.0, f64::max);
    if !(speed_max > 0.0) {
        return Err(Error::Data("all speeds are zero".into()));
    }
    let u_max = if table.rescale { speed_max } else { 1.0 };

    let valid: Vec<Vec<bool>> = slices
        .iter()
        .map(|s| s.iter().map(|m| m.speed / u_max > SPEED_FLOOR).collect())
        .collect();
    let mut raw_rho = vec![vec![0.0; nx]; slices.len()];
    let mut imputed = vec![vec![false; nx]; slices.len()];
    for j in 0..nx {
        let valid_times: Vec<usize> = (0..slices.len()).filter(|&i| valid[i][j]).collect();
        if valid_times.is_empty() {
            return Err(Error::Data(format!("no usable speed at position {}", xs[j])));
        }
        for i in 0..slices.len() {
            let src = if valid[i][j] {
                i
            } else {
                imputed[i][j] = true;
                nearest_time(&slices, &valid_times, i)
            };
            let m = &slices[src][j];
            raw_rho[i][j] = m.flow / m.speed;
        }
    }

    let rho_max = if table.rescale {
        raw_rho.iter().flatten().copied().fold(0.0, f64::max)
    } else {
        1.0
    };
    if !(rho_max > 0.0) {
        return Err(Error::Data("all densities are zero".into()));
    }
    let rho: Vec<Vec<f64>> = raw_rho
        .iter()
        .map(|r| r.iter().map(|v| v / rho_max).collect())
        .collect();
    if rho.iter().flatten().any(|r| *r > 1.0) {
        return Err(Error::Data("densities exceed 1 in a table that is declared dimensionless".into()));
    }
    let u: Vec<Vec<f64>> = slices
        .iter()
        .map(|s| s.iter().map(|m| m.speed / u_max).collect())
        .collect();

    let x0 = xs[0];
    let span = xs[nx - 1] - x0;
    let length = table.section_length.unwrap_or(span);
    if length < span * (1.0 - 1e-12) {
        return Err(Error::Data(format!(
            "section length {length} is shorter than the observed span {span}"
        )));
    }
    let scale = ScaleFactors {
        rho_max,
        u_max,
        x_origin: x0,
        length,
        t_origin: slices[0][0].t,
    };
    let positions = xs.iter().map(|x| (x - x0) / length).collect();
    let times = slices.iter().map(|s| (s[0].t - scale.t_origin) / scale.time_scale()).collect();
    let mut ds = NormalizedDataset::from_fields(times, positions, rho, u)?;
    ds.imputed = imputed;
    ds.scale = scale;
    Ok(ds)
}

fn nearest_time(slices: &[&[Measurement]], valid_times: &[usize], i: usize) -> usize {
    let t = slices[i][0].t;
    // earlier time wins a tie
    *valid_times
        .iter()
        .min_by(|&&a, &&b| {
            let da = (slices[a][0].t - t).abs();
            let db = (slices[b][0].t - t).abs();
            da.total_cmp(&db).then(a.cmp(&b))
        })
        .expect("non-empty")
}

/// Observed density gradient at every sample.
pub fn finite_diff_derivative(ds: &NormalizedDataset) -> Vec<Vec<f64>> {
    ds.rho.iter().map(|r| finite_difference(&ds.positions, r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[(f64, f64, f64, f64)]) -> RawMeasurementTable {
        RawMeasurementTable {
            rows: rows
                .iter()
                .map(|&(t, x, speed, flow)| Measurement { t, x, speed, flow })
                .collect(),
            section_length: None,
            rescale: true,
        }
    }

    fn grid_table(f: impl Fn(f64, f64) -> (f64, f64)) -> RawMeasurementTable {
        let mut rows = Vec::new();
        for i in 0..4 {
            for j in 0..5 {
                let (t, x) = (30.0 * i as f64, 100.0 + 50.0 * j as f64);
                let (s, q) = f(t, x);
                rows.push((t, x, s, q));
            }
        }
        table(&rows)
    }

    #[test]
    fn uniform_grid_normalizes_to_one() {
        let ds = normalize(&grid_table(|_, _| (20.0, 10.0))).unwrap();
        for i in 0..ds.n_times() {
            for j in 0..ds.n_positions() {
                assert_eq!(ds.rho[i][j], 1.0);
                assert_eq!(ds.u[i][j], 1.0);
                assert_eq!(ds.q[i][j], 1.0);
            }
        }
        assert_eq!(ds.positions, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        // 30 s at 20 m/s over a 200 m section
        assert!((ds.times[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn doubling_speeds_leaves_scaled_fields() {
        let f = |t: f64, x: f64| (10.0 + (x / 70.0).sin() + t / 100.0, 5.0 + (t / 40.0).cos() * (x / 300.0));
        let a = normalize(&grid_table(f)).unwrap();
        let b = normalize(&grid_table(|t, x| {
            let (s, q) = f(t, x);
            (2.0 * s, q)
        }))
        .unwrap();
        for i in 0..a.n_times() {
            for j in 0..a.n_positions() {
                assert!((a.rho[i][j] - b.rho[i][j]).abs() < 1e-12);
                assert!((a.u[i][j] - b.u[i][j]).abs() < 1e-12);
                assert!((a.q[i][j] - b.q[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unscaling_recovers_raw_density() {
        let t = grid_table(|t, x| (5.0 + x / 40.0, 1.0 + t / 90.0 + x / 1000.0));
        let ds = normalize(&t).unwrap();
        for (k, m) in t.rows.iter().enumerate() {
            let (i, j) = (k / 5, k % 5);
            let raw = m.flow / m.speed;
            assert!((ds.scale.raw_density(ds.rho[i][j]) - raw).abs() <= 1e-12 * raw);
            assert!((ds.scale.raw_position(ds.positions[j]) - m.x).abs() < 1e-9);
            assert!((ds.scale.raw_time(ds.times[i]) - m.t).abs() < 1e-9);
        }
    }

    #[test]
    fn flow_is_density_times_speed() {
        let ds = normalize(&grid_table(|t, x| (3.0 + (t + x).sin(), 2.0 + (x / 50.0).cos()))).unwrap();
        for i in 0..ds.n_times() {
            for j in 0..ds.n_positions() {
                assert!((ds.q[i][j] - ds.rho[i][j] * ds.u[i][j]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn stopped_traffic_imputed_from_nearest_time() {
        let t = table(&[
            (0.0, 0.0, 10.0, 2.0),
            (0.0, 1.0, 10.0, 4.0),
            (10.0, 0.0, 0.0, 0.0),
            (10.0, 1.0, 10.0, 4.0),
            (25.0, 0.0, 10.0, 6.0),
            (25.0, 1.0, 10.0, 4.0),
        ]);
        let ds = normalize(&t).unwrap();
        assert!(ds.imputed[1][0]);
        assert_eq!(ds.imputed.iter().flatten().filter(|b| **b).count(), 1);
        // t = 0 is closer than t = 25
        assert_eq!(ds.rho[1][0], ds.rho[0][0]);
    }

    #[test]
    fn ragged_or_tiny_tables_rejected() {
        assert!(normalize(&table(&[(0.0, 0.0, 1.0, 1.0), (0.0, 1.0, 1.0, 1.0)])).is_err());
        let ragged = table(&[
            (0.0, 0.0, 1.0, 1.0),
            (0.0, 1.0, 1.0, 1.0),
            (1.0, 0.0, 1.0, 1.0),
            (1.0, 2.0, 1.0, 1.0),
        ]);
        assert!(normalize(&ragged).is_err());
        assert!(normalize(&grid_table(|_, _| (0.0, 0.0))).is_err());
    }

    #[test]
    fn declared_section_length_scales_positions() {
        let mut t = grid_table(|_, _| (1.0, 1.0));
        t.section_length = Some(400.0);
        let ds = normalize(&t).unwrap();
        assert_eq!(ds.positions[4], 0.5);
        t.section_length = Some(100.0);
        assert!(normalize(&t).is_err());
    }

    #[test]
    fn dimensionless_tables_kept_as_is() {
        let mut t = grid_table(|_, x| (0.8, 0.8 * x / 1000.0));
        t.rescale = false;
        let ds = normalize(&t).unwrap();
        assert!((ds.rho[0][4] - 0.3).abs() < 1e-12);
        assert_eq!(ds.u[0][0], 0.8);
    }

    #[test]
    fn box_filter_recomputes_flow_and_gradient() {
        let ds = normalize(&grid_table(|t, x| (3.0 + (t + x).sin(), 2.0 + (x / 50.0).cos()))).unwrap();
        let f = ds.box_filtered(1);
        for i in 0..f.n_times() {
            assert_eq!(f.rho[i], box_filter(&ds.rho[i], 1));
            assert_eq!(f.drho[i], finite_difference(&f.positions, &f.rho[i]));
            for j in 0..f.n_positions() {
                assert!((f.q[i][j] - f.rho[i][j] * f.u[i][j]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn csv_has_one_row_per_sample() {
        let ds = normalize(&grid_table(|_, _| (20.0, 10.0))).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf, None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x,rho,u,q,drho,excluded"));
        assert_eq!(lines.count(), 20);
    }
}
