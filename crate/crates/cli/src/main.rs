//! `zonalcut`: grid parsing, PTDFs, congestion weights, clustering and
//! division comparison as file-to-file subcommands.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{CliError, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "zonalcut", version, about = "Zonal division of transmission grids in PTDF space")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON case file.
    #[arg(long, global = true)]
    pub case: Option<PathBuf>,
    /// Directory for output files; created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Reference bus id (defaults to the lowest bus id).
    #[arg(long, global = true)]
    pub reference: Option<u32>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the nodal PTDF matrix as ptdf.csv.
    Ptdf,
    /// Solve least-cost dispatch per scenario and write weights.csv.
    Congestion(CongestionArgs),
    /// Build the division hierarchy from a weights file.
    Cluster(ClusterArgs),
    /// Clear the zonal market for several divisions and write comparison.csv.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct CongestionArgs {
    /// JSON array of scenarios; a single base scenario when omitted.
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    /// Keep only the heaviest lines.
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Drop lines whose share of total congestion cost is at or below this.
    #[arg(long, default_value_t = zonalcut_core::DEFAULT_MIN_WEIGHT)]
    pub min_weight: f64,
    /// Allow load shedding at each load's value of lost load.
    #[arg(long)]
    pub curtailment: bool,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Weights CSV written by `congestion`.
    #[arg(long)]
    pub weights: PathBuf,
    /// Zone count of the division to single out as partition.json.
    #[arg(long)]
    pub z: Option<usize>,
    /// Drop the weakest congested line until every zone has a generator.
    #[arg(long, requires = "z")]
    pub require_generation: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Partition files as `label=path` (or just `path`, labelled by file stem).
    #[arg(long, num_args = 1.., required = true)]
    pub partitions: Vec<String>,
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    /// Weights CSV for the error norm; derived from the forecast dispatches when omitted.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Zones with |net position| at or below this (MW) have no defined GSK.
    #[arg(long, default_value_t = zonalcut_core::Tolerances::default().epsilon_gsk)]
    pub epsilon_gsk: f64,
    /// Serve demand in full instead of allowing curtailment at VOLL.
    #[arg(long)]
    pub firm_demand: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            let message = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("{}", CliError::usage(message));
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let result = match &cli.command {
        Command::Ptdf => commands::ptdf(&cli.global),
        Command::Congestion(args) => commands::congestion(&cli.global, args),
        Command::Cluster(args) => commands::cluster(&cli.global, args),
        Command::Compare(args) => commands::compare(&cli.global, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code)
        }
    }
}
