use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use nonlocal_traffic::data::{
    bin_summaries, empirical_convolution, ingest_csv, normalize, NormalizedDataset, UnitDeclaration,
};
use nonlocal_traffic::fd_calibration::{
    calibrate_newell, calibrate_spline_sweep, predict_flow, write_fd_table, write_prediction_csv, FdReport,
    FdTableRow, NewellGrid,
};
use nonlocal_traffic::grid_basis::{PolyField, SpatialGrid};
use nonlocal_traffic::ldg::LdgSolver;
use nonlocal_traffic::model::{FluxVariant, Kernel, ModelParams};
use nonlocal_traffic::solution_calibration::{
    calibrate_solution, compare_models, evaluate, extract_scenario, synthesize, write_table, Scenario, SolutionGrid,
    VariantFit,
};

use crate::config::{RunConfig, VelocityFamily};
use crate::Command;

/// Files written by a command, relative to the output directory.
#[derive(Debug, Default)]
pub struct Artifacts {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Artifacts {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(PathBuf::from(name));
        p
    }

    fn create(&mut self, name: &str) -> Result<File> {
        let p = self.path(name);
        File::create(&p).with_context(|| format!("creating {}", p.display()))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let f = self.create(name)?;
        serde_json::to_writer_pretty(f, value)?;
        Ok(())
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }
}

pub fn run_command(command: Command, cfg: &RunConfig) -> Result<Artifacts> {
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let mut art = Artifacts::new(&cfg.out);
    match command {
        Command::Prepare => prepare(cfg, &mut art)?,
        Command::Simulate => simulate(cfg, &mut art)?,
        Command::CalibrateFd => calibrate_fd(cfg, &mut art)?,
        Command::CalibrateSolution => calibrate_sol(cfg, &mut art)?,
        Command::Compare => compare(cfg, &mut art)?,
        Command::Synth => synth(cfg, &mut art)?,
    }
    Ok(art)
}

fn load_dataset(cfg: &RunConfig) -> Result<NormalizedDataset> {
    let input = cfg.input.as_ref().context("no input file")?;
    let sidecar = UnitDeclaration::sidecar_path(input);
    let units = match &cfg.units {
        Some(p) => UnitDeclaration::from_json_file(p)?,
        None if sidecar.is_file() => UnitDeclaration::from_json_file(&sidecar)?,
        None => UnitDeclaration::default(),
    };
    let table = ingest_csv(input, &units)?;
    let ds = normalize(&table)?;
    log::info!(
        "{}: {} times × {} positions",
        input.display(),
        ds.n_times(),
        ds.n_positions()
    );
    Ok(if cfg.box_filter > 0 {
        ds.box_filtered(cfg.box_filter)
    } else {
        ds
    })
}

fn prepare(cfg: &RunConfig, art: &mut Artifacts) -> Result<()> {
    let ds = load_dataset(cfg)?;
    ds.write_csv(art.create("dataset.csv")?, None)?;
    art.json("scale.json", &ds.scale)?;
    bin_summaries(&ds, &cfg.bins, None)?.write_csv(art.create("bins.csv")?)?;
    Ok(())
}

fn simulate(cfg: &RunConfig, art: &mut Artifacts) -> Result<()> {
    let s = &cfg.simulation;
    let params = s.model.clone().context("no model")?;
    let grid = Arc::new(SpatialGrid::uniform(s.domain[0], s.domain[1], s.n_cells, s.solver.degree)?);
    let initial = PolyField::interpolate(grid.clone(), |x| s.initial.eval(x, s.domain));
    let solver = LdgSolver::new(grid, params, s.boundary.clone(), s.solver.clone())?;
    let record = solver.simulate(&initial, 0.0, s.t_final, &s.output_times)?;
    let csv = art.path("solution.csv");
    let json = art.path("solution.json");
    record.save(&csv, &json)?;
    Ok(())
}

fn calibrate_fd(cfg: &RunConfig, art: &mut Artifacts) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for &gamma in &cfg.gammas {
        let kernel = Kernel::new(cfg.kernel, gamma)?;
        let fit = match cfg.fd.velocity {
            VelocityFamily::Newell => {
                let grid = NewellGrid {
                    v: cfg.fd.v.clone(),
                    c: cfg.fd.c.clone(),
                    kappa: cfg.kappas.clone(),
                    saturation: vec![cfg.saturation],
                };
                calibrate_newell(&ds, &kernel, &grid, &cfg.bins)?
            }
            VelocityFamily::Spline => {
                calibrate_spline_sweep(&ds, &kernel, &cfg.kappas, &cfg.saturation, cfg.fd.spline, &cfg.bins)?
            }
        };
        let pred = predict_flow(&ds, &fit.params)?;
        write_prediction_csv(&ds, &pred.flows, art.create(&format!("prediction_gamma_{gamma}.csv"))?)?;
        rows.push(FdTableRow::from_fit(&fit));
        reports.push(FdReport::new(&fit, cfg.fd.velocity.name()));
    }
    write_fd_table(&rows, art.create("fd_table.csv")?)?;
    art.json("fd_report.json", &reports)?;
    Ok(())
}

fn scenario(cfg: &RunConfig, ds: &NormalizedDataset) -> Result<Scenario> {
    let full_x = [ds.positions[0], ds.positions[ds.n_positions() - 1]];
    let full_t = [ds.times[0], ds.times[ds.n_times() - 1]];
    let x = cfg.solution.x_range.unwrap_or(full_x);
    let t = cfg.solution.t_range.unwrap_or(full_t);
    Ok(extract_scenario(ds, (x[0], x[1]), (t[0], t[1]))?)
}

fn calibrate_all(cfg: &RunConfig, sc: &Scenario) -> Result<Vec<VariantFit>> {
    let s = &cfg.solution;
    let grid = SolutionGrid {
        v: s.v.clone(),
        c: s.c.clone(),
        kappa: cfg.kappas.clone(),
    };
    let mut fits = Vec::new();
    for &model in &s.models {
        fits.extend(calibrate_solution(
            sc,
            model,
            cfg.kernel,
            &cfg.gammas,
            &grid,
            &cfg.saturation,
            &s.setup,
        )?);
    }
    Ok(fits)
}

fn write_comparison(cfg: &RunConfig, sc: &Scenario, fits: &[VariantFit], art: &mut Artifacts, full: bool) -> Result<()> {
    let report = compare_models(sc, fits, cfg.kernel, &cfg.solution.dataset, &cfg.solution.scenario);
    write_table(&report.rows, art.create("table.csv")?)?;
    if full {
        art.json("comparison.json", &report)?;
        report.write_final_profiles(art.create("final_profiles.csv")?)?;
        let dir = cfg.out.join("snapshots");
        for p in report.write_snapshots(&dir)? {
            art.files.push(p.strip_prefix(&cfg.out).unwrap_or(&p).to_path_buf());
        }
        art.files.push(PathBuf::from("snapshots/times.csv"));
    }
    Ok(())
}

fn calibrate_sol(cfg: &RunConfig, art: &mut Artifacts) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let sc = scenario(cfg, &ds)?;
    let fits = calibrate_all(cfg, &sc)?;
    art.json("fits.json", &fits)?;
    write_comparison(cfg, &sc, &fits, art, false)
}

fn compare(cfg: &RunConfig, art: &mut Artifacts) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let sc = scenario(cfg, &ds)?;
    let fits = match &cfg.solution.fits {
        Some(path) => {
            let stored: Vec<VariantFit> = serde_json::from_reader(File::open(path)?)
                .with_context(|| format!("reading fits from {}", path.display()))?;
            // rescored on this window
            stored
                .into_iter()
                .map(|f| {
                    let e = evaluate(&sc, &f.params, &cfg.solution.setup);
                    match e.solution {
                        Some(solution) => Ok(VariantFit {
                            l2: e.l2,
                            msr: e.msr,
                            solution,
                            ..f
                        }),
                        None => bail!(
                            "the {} fit failed on this window: {}",
                            f.params.flux.name(),
                            e.failure.unwrap_or_default()
                        ),
                    }
                })
                .collect::<Result<Vec<_>>>()?
        }
        None => calibrate_all(cfg, &sc)?,
    };
    write_comparison(cfg, &sc, &fits, art, true)
}

#[derive(Serialize)]
struct SynthRecord<'a> {
    model: &'a ModelParams,
    noise: f64,
    seed: u64,
    positions: usize,
    times: usize,
    t_final: f64,
}

fn synth(cfg: &RunConfig, art: &mut Artifacts) -> Result<()> {
    let s = &cfg.synth;
    let params = s.model.as_ref().context("no model")?;
    let xs: Vec<f64> = (0..s.n_positions).map(|j| j as f64 / (s.n_positions - 1) as f64).collect();
    let ts: Vec<f64> = (0..s.n_times).map(|i| s.t_final * i as f64 / (s.n_times - 1) as f64).collect();
    let init: Vec<f64> = xs.iter().map(|&x| s.initial.eval(x, [0.0, 1.0])).collect();
    let ghosts = (init[0], init[init.len() - 1]);
    let truth = synthesize(params, &s.setup, xs.clone(), ts.clone(), &init, ghosts)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1.0)?;
    let rho: Vec<Vec<f64>> = truth
        .truth
        .iter()
        .map(|row| {
            row.iter()
                .map(|&r| (r * (1.0 + s.noise * normal.sample(&mut rng))).clamp(0.0, 1.0))
                .collect()
        })
        .collect();

    // speeds from the generating law, seen through the measured density
    let vel = &params.velocity;
    let ds = NormalizedDataset::from_fields(ts.clone(), xs.clone(), rho.clone(), vec![vec![1.0; xs.len()]; ts.len()])?;
    let conv = match (params.flux, &params.kernel) {
        (FluxVariant::Nonlocal, Some(k)) if k.gamma() < 1.0 => {
            Some(empirical_convolution(&ds, params.kappa, &params.saturation, k)?)
        }
        _ => None,
    };
    let mut w = csv::Writer::from_writer(art.create("synth.csv")?);
    w.write_record(["t", "x", "speed", "flow"])?;
    for (i, t) in ts.iter().enumerate() {
        for (j, x) in xs.iter().enumerate() {
            let r = match &conv {
                Some(c) if c.is_retained(j) => c.values[i][j],
                _ => rho[i][j],
            };
            let u = vel.eval(r);
            w.write_record([t.to_string(), x.to_string(), u.to_string(), (rho[i][j] * u).to_string()])?;
        }
    }
    w.flush()?;
    let units = UnitDeclaration {
        flow_per: nonlocal_traffic::data::TimeUnit::Seconds,
        rescale: false,
        ..UnitDeclaration::default()
    };
    art.json("synth.units.json", &units)?;
    art.json(
        "synth_truth.json",
        &SynthRecord {
            model: params,
            noise: s.noise,
            seed: cfg.seed,
            positions: s.n_positions,
            times: s.n_times,
            t_final: s.t_final,
        },
    )?;
    Ok(())
}
