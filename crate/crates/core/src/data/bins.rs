use std::io::Write;

use serde::{Deserialize, Serialize};

use super::NormalizedDataset;
use crate::{Error, Result};

/// Which traffic regime to keep when binning.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    #[default]
    All,
    /// Densities below the threshold.
    Free,
    /// Densities at or above the threshold.
    Congested,
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Regime::All),
            "free" => Ok(Regime::Free),
            "congested" => Ok(Regime::Congested),
            _ => Err(Error::param("regime", format!("expected free, congested or all, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SdKind {
    /// Divide by the count.
    #[default]
    Population,
    /// Divide by the count minus one.
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinConfig {
    pub bins: usize,
    pub rho_max: f64,
    pub regime: Regime,
    pub regime_threshold: f64,
    pub sd: SdKind,
}

impl Default for BinConfig {
    fn default() -> Self {
        Self {
            bins: 40,
            rho_max: 1.0,
            regime: Regime::All,
            regime_threshold: 0.2,
            sd: SdKind::Population,
        }
    }
}

impl BinConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(Error::param("bins", "need at least one bin"));
        }
        if !(self.rho_max > 0.0 && self.rho_max.is_finite()) {
            return Err(Error::param("rho_max", "must be positive"));
        }
        Ok(())
    }

    fn keeps(&self, rho: f64) -> bool {
        match self.regime {
            Regime::All => true,
            Regime::Free => rho < self.regime_threshold,
            Regime::Congested => rho >= self.regime_threshold,
        }
    }

    /// Bin holding `rho`, or `None` outside `[0, rho_max]` or the regime.
    pub fn index(&self, rho: f64) -> Option<usize> {
        if !(0.0..=self.rho_max).contains(&rho) || !self.keeps(rho) {
            return None;
        }
        Some(((rho / self.rho_max * self.bins as f64) as usize).min(self.bins - 1))
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.bins).map(|m| self.rho_max * m as f64 / self.bins as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// `None` for an empty bin.
    pub stats: Option<BinStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub config: BinConfig,
    pub bins: Vec<Bin>,
}

impl BinSummary {
    pub fn total_count(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// Rows `bin_lo,bin_hi,count,mu,sd`; empty bins leave `mu` and `sd` blank.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_lo", "bin_hi", "count", "mu", "sd"])?;
        for b in &self.bins {
            let (mu, sd) = match b.stats {
                Some(s) => (s.mean.to_string(), s.sd.to_string()),
                None => (String::new(), String::new()),
            };
            w.write_record([b.lo.to_string(), b.hi.to_string(), b.count.to_string(), mu, sd])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Group `(density, value)` pairs into equal-width density bins and
/// summarize the values of each bin.
pub fn bin_samples<I>(config: &BinConfig, samples: I) -> Result<BinSummary>
where
    I: IntoIterator<Item = (f64, f64)>,
{
    config.validate()?;
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); config.bins];
    for (rho, v) in samples {
        if let Some(m) = config.index(rho) {
            groups[m].push(v);
        }
    }
    let edges = config.edges();
    let bins = groups
        .iter()
        .enumerate()
        .map(|(m, g)| Bin {
            lo: edges[m],
            hi: edges[m + 1],
            count: g.len(),
            stats: summarize(g, config.sd),
        })
        .collect();
    Ok(BinSummary {
        config: config.clone(),
        bins,
    })
}

impl BinStats {
    /// Mean and standard deviation; `None` for no values.
    pub fn of(values: &[f64], kind: SdKind) -> Option<BinStats> {
        summarize(values, kind)
    }
}

fn summarize(values: &[f64], kind: SdKind) -> Option<BinStats> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let denom = match kind {
        SdKind::Population => n as f64,
        SdKind::Sample if n > 1 => (n - 1) as f64,
        SdKind::Sample => return Some(BinStats { mean, sd: 0.0 }),
    };
    Some(BinStats {
        mean,
        sd: (ss / denom).sqrt(),
    })
}

/// Bins of the observed flow over the first `n_retained` positions of every
/// time (all positions when `None`).
pub fn bin_summaries(ds: &NormalizedDataset, config: &BinConfig, n_retained: Option<usize>) -> Result<BinSummary> {
    let nr = n_retained.unwrap_or(ds.n_positions()).min(ds.n_positions());
    bin_samples(
        config,
        ds.rho
            .iter()
            .zip(&ds.q)
            .flat_map(|(r, q)| r[..nr].iter().copied().zip(q[..nr].iter().copied())),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_bin_population_sd() {
        let cfg = BinConfig {
            bins: 1,
            ..Default::default()
        };
        let s = bin_samples(&cfg, [(0.1, 1.0), (0.5, 2.0), (0.9, 3.0)]).unwrap();
        let st = s.bins[0].stats.unwrap();
        assert_eq!(st.mean, 2.0);
        assert!((st.sd - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let sample = bin_samples(&BinConfig { sd: SdKind::Sample, ..cfg }, [(0.1, 1.0), (0.5, 2.0), (0.9, 3.0)]).unwrap();
        assert!((sample.bins[0].stats.unwrap().sd - 1.0).abs() < 1e-15);
    }

    #[test]
    fn congested_filter_drops_free_samples() {
        let cfg = BinConfig {
            regime: Regime::Congested,
            ..Default::default()
        };
        let s = bin_samples(&cfg, [(0.05, 1.0), (0.19, 1.0), (0.2, 2.0), (0.7, 3.0)]).unwrap();
        assert_eq!(s.total_count(), 2);
        let free = bin_samples(&BinConfig { regime: Regime::Free, ..cfg }, [(0.05, 1.0), (0.2, 2.0)]).unwrap();
        assert_eq!(free.total_count(), 1);
    }

    #[test]
    fn disjoint_subsets_match_independent_stats() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lo: Vec<(f64, f64)> = (0..57).map(|_| (rng.random_range(0.0..0.5), rng.random_range(0.0..1.0))).collect();
        let hi: Vec<(f64, f64)> = (0..31).map(|_| (rng.random_range(0.5..1.0), rng.random_range(0.0..1.0))).collect();
        let cfg = BinConfig {
            bins: 2,
            ..Default::default()
        };
        let s = bin_samples(&cfg, lo.iter().chain(&hi).copied()).unwrap();
        for (bin, set) in s.bins.iter().zip([&lo, &hi]) {
            let n = set.len() as f64;
            let mean = set.iter().map(|p| p.1).sum::<f64>() / n;
            let var = set.iter().map(|p| p.1 * p.1).sum::<f64>() / n - mean * mean;
            let st = bin.stats.unwrap();
            assert_eq!(bin.count, set.len());
            assert!((st.mean - mean).abs() < 1e-12);
            assert!((st.sd - var.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn edges_partition_and_counts_add_up() {
        let cfg = BinConfig::default();
        let e = cfg.edges();
        assert_eq!(e.len(), 41);
        assert_eq!(e[0], 0.0);
        assert_eq!(e[40], 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<(f64, f64)> = (0..500).map(|_| (rng.random_range(0.0..=1.0), 1.0)).collect();
        let s = bin_samples(&cfg, pts.iter().copied().chain([(1.0, 1.0), (0.0, 1.0)])).unwrap();
        assert_eq!(s.total_count(), 502);
        assert_eq!(cfg.index(1.0), Some(39));
        assert_eq!(cfg.index(0.025), Some(1));
        assert_eq!(cfg.index(1.01), None);
    }

    #[test]
    fn empty_bins_written_blank() {
        let cfg = BinConfig {
            bins: 2,
            ..Default::default()
        };
        let s = bin_samples(&cfg, [(0.1, 1.0)]).unwrap();
        assert!(s.bins[1].stats.is_none());
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "bin_lo,bin_hi,count,mu,sd\n0,0.5,1,1,0\n0.5,1,0,,\n");
    }
}
