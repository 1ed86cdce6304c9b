use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use nonlocal_traffic_cli::commands::run_command;
use nonlocal_traffic_cli::config::{parse_config, Overrides};
use nonlocal_traffic_cli::manifest::Manifest;
use nonlocal_traffic_cli::Command;

/// Simulation and calibration of a nonlocal traffic-flow model.
#[derive(Debug, Parser)]
#[command(name = "nltraffic", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = parse_config(cli.command, &cli.overrides)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("starting the worker pool")?;
    }
    let threads = rayon::current_num_threads();
    log::info!("{} with {threads} threads, output in {}", cli.command.name(), cfg.out.display());
    let art = run_command(cli.command, &cfg)?;
    Manifest::new(cli.command.name(), &cfg, threads, art.files())?.write(&cfg.out)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({
                "level": "error",
                "command": cli.command.name(),
                "error": e.to_string(),
                "causes": e.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
            });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
