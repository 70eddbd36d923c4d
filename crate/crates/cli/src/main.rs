//! `convnet`: equilibrium, condition, certificate, simulation and
//! region-sweep workflows for converter networks described in JSON.
//!
//! Exit codes: 0 success, 1 input error (including command-line usage
//! errors), 2 solver failure, 3 condition failure, 4 certificate failure.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "convnet", version, about = "Analyse networks of matching-controlled DC/AC converters")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Network description (JSON).
    #[arg(long, global = true, value_name = "FILE")]
    pub network: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Angle of the first converter at the reported equilibrium (rad).
    #[arg(long, global = true, default_value_t = 0.0, allow_negative_numbers = true)]
    pub gauge: f64,
    /// Replace the reactive shunt load of the network file.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub b_load_override: Option<f64>,
    /// Solve with the DC inputs exactly as dispatched instead of adding a
    /// uniform balancing offset.
    #[arg(long, global = true)]
    pub strict_input: bool,
    /// Newton iteration limit.
    #[arg(long, global = true, default_value_t = 50)]
    pub max_iter: usize,
    /// Seed for randomised steps (perturbed starts, sampled checks).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for a gauge-fixed synchronous equilibrium.
    Equilibrium(commands::EquilibriumArgs),
    /// Evaluate the decentralised reactive-power condition.
    Condition,
    /// Build the projected Lyapunov certificate.
    Certify(commands::CertifyArgs),
    /// Integrate the network from an angle-offset initial state.
    Simulate(commands::SimulateArgs),
    /// Sweep initial angle offsets and estimate the contraction region.
    Region(commands::RegionArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Equilibrium(args) => commands::equilibrium(&cli.common, args),
        Command::Condition => commands::condition(&cli.common),
        Command::Certify(args) => commands::certify(&cli.common, args),
        Command::Simulate(args) => commands::simulate(&cli.common, args),
        Command::Region(args) => commands::region(&cli.common, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
