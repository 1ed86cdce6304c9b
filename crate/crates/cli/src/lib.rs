//! Driver behind the `nltraffic` binary: run configuration, the
//! subcommands and the run manifest.

pub mod commands;
pub mod config;
pub mod manifest;

/// One pipeline per subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::Subcommand)]
pub enum Command {
    /// Normalize a measurement file and bin its flows.
    Prepare,
    /// Run the solver forward from a configured initial profile.
    Simulate,
    /// Fit the density-flow relation by band matching.
    CalibrateFd,
    /// Fit each model to a measured space-time window.
    CalibrateSolution,
    /// Tabulate calibrated models side by side with profile exports.
    Compare,
    /// Generate a measurement file from a known model.
    Synth,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Prepare => "prepare",
            Command::Simulate => "simulate",
            Command::CalibrateFd => "calibrate-fd",
            Command::CalibrateSolution => "calibrate-solution",
            Command::Compare => "compare",
            Command::Synth => "synth",
        }
    }
}
