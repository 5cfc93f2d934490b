//! `swapsim`: run the HOM, swapping, tomography and heralding pipelines from
//! one bench config and write JSON and CSV results.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "swapsim", version, about = "Entanglement swapping bench simulator")]
pub struct Cli {
    /// Bench description (TOML).
    #[arg(long, global = true, default_value = "configs/replication.toml")]
    pub config: PathBuf,
    /// Master seed; overrides `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Pulses per analyzer setting; overrides `run.pulses`.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub pulses: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Worker shards; overrides `run.workers`.
    #[arg(long, global = true, env = "SWAPSIM_WORKERS", value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Two-photon interference at the BSM beam splitter.
    Hom {
        /// Require a click on both 795 nm partner detectors.
        #[arg(long)]
        conditioned: bool,
    },
    /// Entanglement swapping: phase scan or state tomography.
    Swap(SwapArgs),
    /// Bandwidth-limited heralding efficiency table.
    Herald,
    /// Repeat swap tomography over values of one bench parameter.
    Sweep {
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Discard multi-pair emissions before the BSM.
        #[arg(long)]
        qnd: bool,
    },
}

#[derive(Args, Debug)]
#[command(group = ArgGroup::new("mode").required(true))]
pub struct SwapArgs {
    /// Scan α − β over one period and fit the fringe.
    #[arg(long, group = "mode")]
    pub scan: bool,
    /// Measure the 36 tomography settings and reconstruct the A–D state.
    #[arg(long, group = "mode")]
    pub tomo: bool,
    /// Discard multi-pair emissions before the BSM.
    #[arg(long)]
    pub qnd: bool,
    /// Write every click of the first setting to this CSV (pulse-by-pulse).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Mu,
    Overlap,
    StateFidelity,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Mu => "mu",
            SweepParam::Overlap => "overlap",
            SweepParam::StateFidelity => "state_fidelity",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
