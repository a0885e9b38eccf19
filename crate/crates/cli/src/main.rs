//! `ldcoh`: trajectories in, coherent sets out.
//!
//! Every subcommand reads from and writes to a work directory (`--dir`).
//! Each artifact embeds the hash of the run configuration that produced
//! it; the configurations live under `configs/` and `manifest.json` lists
//! every artifact with its SHA-256.

mod commands;
mod config;
mod workdir;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracing::Level;

use commands::{ClusterArgs, CornerstonesArgs, ExportArgs, GenerateArgs, RatesArgs, SemidistArgs, VerifyArgs};

#[derive(Parser)]
#[command(name = "ldcoh", version, about = "Large-deviation transport semidistances and coherent sets")]
struct Cli {
    /// More log output on stderr (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only errors on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Advect seeds through a benchmark flow or map and write the ensemble.
    Generate(GenerateArgs),
    /// All-pairs rates nu_K(i -> j) of an ensemble.
    Rates(RatesArgs),
    /// Symmetric semidistance (cross, meet or l2) and its axiom report.
    Semidist(SemidistArgs),
    /// Greedy max-min cornerstone search with the drop-rule suggestion.
    Cornerstones(CornerstonesArgs),
    /// Hard clusters and fuzzy affiliations to the cornerstones.
    Cluster(ClusterArgs),
    /// Flat (position, value) tables at one time slice for plotting.
    ExportPlot(ExportArgs),
    /// Re-check every artifact against the manifest and its config.
    Verify(VerifyArgs),
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let core = e.chain().find_map(|c| c.downcast_ref::<ldcoh_core::Error>());
    match core {
        Some(err) if err.is_validation() => 2,
        Some(_) => 3,
        None if e.chain().any(|c| c.is::<serde_json::Error>()) => 2,
        None => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => Level::ERROR,
        (false, 0) => Level::WARN,
        (false, 1) => Level::INFO,
        _ => Level::DEBUG,
    };
    tracing_subscriber::fmt().with_max_level(level).with_writer(std::io::stderr).with_target(false).init();

    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Rates(a) => commands::rates(a),
        Command::Semidist(a) => commands::semidist(a),
        Command::Cornerstones(a) => commands::cornerstones(a),
        Command::Cluster(a) => commands::cluster(a),
        Command::ExportPlot(a) => commands::export_plot(a),
        Command::Verify(a) => commands::verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
