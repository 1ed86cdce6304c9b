use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use nonlocal_traffic::data::{BinConfig, Regime};
use nonlocal_traffic::fd_calibration::{NewellGrid, SplineSearch};
use nonlocal_traffic::ldg::{BoundaryCondition, SolverConfig};
use nonlocal_traffic::model::{FluxVariant, KernelShape, ModelParams, SaturationParams};
use nonlocal_traffic::solution_calibration::{SolutionGrid, SolutionSetup};

use crate::Command;

/// Family of speed laws fitted by `calibrate-fd`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VelocityFamily {
    #[default]
    Newell,
    Spline,
}

impl VelocityFamily {
    pub fn name(self) -> &'static str {
        match self {
            VelocityFamily::Newell => "newell",
            VelocityFamily::Spline => "spline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdSettings {
    pub velocity: VelocityFamily,
    pub v: Vec<f64>,
    pub c: Vec<f64>,
    pub spline: SplineSearch,
}

impl Default for FdSettings {
    fn default() -> Self {
        let g = NewellGrid::default();
        Self {
            velocity: VelocityFamily::Newell,
            v: g.v,
            c: g.c,
            spline: SplineSearch::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolutionSettings {
    /// Scaled position range of the window; the whole dataset when absent.
    pub x_range: Option<[f64; 2]>,
    pub t_range: Option<[f64; 2]>,
    pub v: Vec<f64>,
    pub c: Vec<f64>,
    pub models: Vec<FluxVariant>,
    pub setup: SolutionSetup,
    /// Labels for the report table.
    pub dataset: String,
    pub scenario: String,
    /// Fits written by `calibrate-solution`, reused by `compare`.
    pub fits: Option<PathBuf>,
}

impl Default for SolutionSettings {
    fn default() -> Self {
        let g = SolutionGrid::default();
        Self {
            x_range: None,
            t_range: None,
            v: g.v,
            c: g.c,
            models: vec![FluxVariant::Nonlocal, FluxVariant::LocalLWR, FluxVariant::Phi],
            setup: SolutionSetup::default(),
            dataset: "dataset".into(),
            scenario: "scenario".into(),
            fits: None,
        }
    }
}

/// Initial density of a forward simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialProfile {
    Constant { value: f64 },
    Riemann { left: f64, right: f64, x0: f64 },
    /// `base + amplitude · exp(−((x − center) / width)²)`
    Bump { base: f64, amplitude: f64, center: f64, width: f64 },
    /// `mean + amplitude · sin(2π · periods · s)` with `s` the relative position.
    Sine { mean: f64, amplitude: f64, periods: f64 },
}

impl Default for InitialProfile {
    fn default() -> Self {
        InitialProfile::Bump {
            base: 0.3,
            amplitude: 0.5,
            center: 0.5,
            width: 0.1,
        }
    }
}

impl InitialProfile {
    pub fn eval(&self, x: f64, domain: [f64; 2]) -> f64 {
        match *self {
            InitialProfile::Constant { value } => value,
            InitialProfile::Riemann { left, right, x0 } => {
                if x < x0 {
                    left
                } else {
                    right
                }
            }
            InitialProfile::Bump {
                base,
                amplitude,
                center,
                width,
            } => base + amplitude * (-((x - center) / width).powi(2)).exp(),
            InitialProfile::Sine { mean, amplitude, periods } => {
                let s = (x - domain[0]) / (domain[1] - domain[0]);
                mean + amplitude * (2.0 * std::f64::consts::PI * periods * s).sin()
            }
        }
    }

    fn check(&self, domain: [f64; 2]) -> Result<()> {
        let n = 1000;
        for k in 0..=n {
            let x = domain[0] + (domain[1] - domain[0]) * k as f64 / n as f64;
            let v = self.eval(x, domain);
            ensure!((0.0..=1.0).contains(&v), "initial density {v} at x = {x} lies outside [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSettings {
    pub model: Option<ModelParams>,
    pub solver: SolverConfig,
    pub domain: [f64; 2],
    pub n_cells: usize,
    pub t_final: f64,
    /// Recorded times; only the final time when empty.
    pub output_times: Vec<f64>,
    pub initial: InitialProfile,
    pub boundary: BoundaryCondition,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            model: None,
            solver: SolverConfig::default(),
            domain: [0.0, 1.0],
            n_cells: 128,
            t_final: 1.0,
            output_times: Vec::new(),
            initial: InitialProfile::default(),
            boundary: BoundaryCondition::Periodic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub model: Option<ModelParams>,
    /// Positions evenly spread over `[0, 1]`.
    pub n_positions: usize,
    /// Times evenly spread over `[0, t_final]`.
    pub n_times: usize,
    pub t_final: f64,
    /// Relative standard deviation of the multiplicative Gaussian noise.
    pub noise: f64,
    pub initial: InitialProfile,
    pub setup: SolutionSetup,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            model: None,
            n_positions: 65,
            n_times: 21,
            t_final: 0.5,
            noise: 0.0,
            initial: InitialProfile::default(),
            setup: SolutionSetup::default(),
        }
    }
}

/// Settings of one run, read from JSON and adjusted by command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    /// Unit sidecar; `<input>.units.json` is used when present.
    pub units: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    /// Worker threads; all cores when absent.
    pub threads: Option<usize>,
    /// Radius of the spatial box filter applied to the density; 0 disables.
    pub box_filter: usize,
    pub kernel: KernelShape,
    pub gammas: Vec<f64>,
    pub kappas: Vec<f64>,
    pub saturation: SaturationParams,
    pub bins: BinConfig,
    pub fd: FdSettings,
    pub solution: SolutionSettings,
    pub simulation: SimulationSettings,
    pub synth: SynthSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            units: None,
            out: PathBuf::from("out"),
            seed: 0,
            threads: None,
            box_filter: 0,
            kernel: KernelShape::Linear,
            gammas: vec![0.04],
            kappas: (0..=10).map(|i| f64::from(i) / 10.0).collect(),
            saturation: SaturationParams::default(),
            bins: BinConfig::default(),
            fd: FdSettings::default(),
            solution: SolutionSettings::default(),
            simulation: SimulationSettings::default(),
            synth: SynthSettings::default(),
        }
    }
}

/// Values given on the command line; each replaces the file's value.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Measurement CSV.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Comma-separated kernel lengths.
    #[arg(long, global = true, value_name = "LIST")]
    pub gamma_list: Option<String>,
    #[arg(long, global = true, value_parser = ["linear", "quadratic", "exp"])]
    pub kernel: Option<String>,
    /// Comma-separated values or `start:stop:step`.
    #[arg(long, global = true, value_name = "GRID")]
    pub kappa_grid: Option<String>,
    /// Number of density bins.
    #[arg(long, global = true)]
    pub bins: Option<usize>,
    #[arg(long, global = true, value_parser = ["free", "congested", "all"])]
    pub regime: Option<String>,
    /// Radius of the density box filter.
    #[arg(long, global = true, value_name = "RADIUS")]
    pub box_filter: Option<usize>,
    /// Saturation constants `K1,K2,K3`.
    #[arg(long, global = true, value_name = "K1,K2,K3")]
    pub k123: Option<String>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Fits from an earlier `calibrate-solution` run.
    #[arg(long, global = true)]
    pub fits: Option<PathBuf>,
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("`{p}` is not a number")))
        .collect()
}

/// `a,b,c` or `start:stop:step` (inclusive of `stop` up to rounding).
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    if !s.contains(':') {
        return parse_list(s);
    }
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("`{p}` is not a number")))
        .collect::<Result<_>>()?;
    let [start, stop, step] = parts[..] else {
        bail!("a range grid is written start:stop:step, got `{s}`");
    };
    ensure!(step > 0.0 && stop >= start, "empty range `{s}`");
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    // round away the drift of repeated addition
    Ok((0..=n).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect())
}

fn read_file(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        anyhow::anyhow!("{}: at `{key}`: {}", path.display(), e.into_inner())
    })
}

/// Read the file (if any), apply the flags and validate for `command`.
pub fn parse_config(command: Command, o: &Overrides) -> Result<RunConfig> {
    let mut cfg = match &o.config {
        Some(p) => read_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &o.input {
        cfg.input = Some(p.clone());
    }
    if let Some(p) = &o.out {
        cfg.out = p.clone();
    }
    if let Some(s) = &o.gamma_list {
        cfg.gammas = parse_list(s).context("--gamma-list")?;
    }
    if let Some(s) = &o.kernel {
        cfg.kernel = s.parse()?;
    }
    if let Some(s) = &o.kappa_grid {
        cfg.kappas = parse_grid(s).context("--kappa-grid")?;
    }
    if let Some(m) = o.bins {
        cfg.bins.bins = m;
    }
    if let Some(r) = &o.regime {
        cfg.bins.regime = r.parse::<Regime>()?;
    }
    if let Some(r) = o.box_filter {
        cfg.box_filter = r;
    }
    if let Some(s) = &o.k123 {
        let k = parse_list(s).context("--k123")?;
        let [k1, k2, k3] = k[..] else {
            bail!("--k123 takes three numbers, got {}", k.len());
        };
        cfg.saturation = SaturationParams::new(k1, k2, k3, cfg.saturation.kind())?;
    }
    if let Some(t) = o.threads {
        cfg.threads = Some(t);
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(p) = &o.fits {
        cfg.solution.fits = Some(p.clone());
    }
    cfg.validate(command)?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self, command: Command) -> Result<()> {
        for &k in &self.kappas {
            ensure!((0.0..=1.0).contains(&k), "kappas: κ = {k} is outside κ ∈ [0, 1]");
        }
        for &g in &self.gammas {
            ensure!(g > 0.0 && g.is_finite(), "gammas: γ = {g} must be positive");
        }
        self.bins.validate()?;
        ensure!(self.threads != Some(0), "threads must be at least 1");
        let needs_input = matches!(
            command,
            Command::Prepare | Command::CalibrateFd | Command::CalibrateSolution | Command::Compare
        );
        if needs_input {
            let input = self.input.as_ref().context("input: this command needs a measurement file")?;
            ensure!(input.is_file(), "input: {} does not exist", input.display());
            if let Some(u) = &self.units {
                ensure!(u.is_file(), "units: {} does not exist", u.display());
            }
        }
        match command {
            Command::CalibrateFd => {
                ensure!(!self.gammas.is_empty(), "gammas: at least one kernel length is needed");
                ensure!(!self.kappas.is_empty(), "kappas: the κ grid is empty");
                if self.fd.velocity == VelocityFamily::Newell {
                    ensure!(!self.fd.v.is_empty() && !self.fd.c.is_empty(), "fd: the v and c grids must be non-empty");
                }
            }
            Command::CalibrateSolution | Command::Compare => {
                let s = &self.solution;
                if command == Command::CalibrateSolution || s.fits.is_none() {
                    ensure!(!s.models.is_empty(), "solution.models: nothing to calibrate");
                    ensure!(!s.v.is_empty() && !s.c.is_empty(), "solution: the v and c grids must be non-empty");
                    if s.models.contains(&FluxVariant::Nonlocal) {
                        ensure!(!self.gammas.is_empty(), "gammas: the nonlocal model needs a kernel length");
                    }
                    if s.models.iter().any(|m| *m != FluxVariant::LocalLWR) {
                        ensure!(!self.kappas.is_empty(), "kappas: the κ grid is empty");
                    }
                }
                if let Some(f) = &s.fits {
                    ensure!(f.is_file(), "solution.fits: {} does not exist", f.display());
                }
                s.setup.solver.validate()?;
            }
            Command::Simulate => {
                let s = &self.simulation;
                s.model.as_ref().context("simulation.model: a model is required")?.validate()?;
                ensure!(s.domain[1] > s.domain[0], "simulation.domain must be increasing");
                ensure!(s.n_cells > 0, "simulation.n_cells must be positive");
                ensure!(s.t_final > 0.0, "simulation.t_final must be positive");
                s.solver.validate()?;
                s.initial.check(s.domain)?;
            }
            Command::Synth => {
                let s = &self.synth;
                s.model.as_ref().context("synth.model: a model is required")?.validate()?;
                ensure!(s.n_positions >= 2 && s.n_times >= 2, "synth: need at least 2 positions and 2 times");
                ensure!(s.t_final > 0.0, "synth.t_final must be positive");
                ensure!(s.noise >= 0.0 && s.noise.is_finite(), "synth.noise must be non-negative");
                s.setup.solver.validate()?;
                s.initial.check([0.0, 1.0])?;
            }
            Command::Prepare => {}
        }
        Ok(())
    }
}
