//! Configuration-driven runner: solve nonlocal ring problems, verify
//! star-shapedness of level sets, check Green columns, cross-validate against
//! Monte Carlo, and test structural conditions on nonlinearities.
//!
//! Exit codes: 0 success, 2 configuration error, 3 hypothesis failure (a
//! condition report names the witness), 4 solver non-convergence, 5 geometric
//! check failure.

mod config;
mod run;

use clap::{Parser, Subcommand};
use run::RunInputs;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fracstar", version, about)]
struct Cli {
    /// Problem configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for reports and field dumps.
    #[arg(long)]
    out: PathBuf,
    /// Base seed for Monte Carlo stages (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Geometric tolerance override.
    #[arg(long)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured problem and dump the field.
    Solve,
    /// Full verification pipeline: conditions, solve, level-set geometry.
    Analyze,
    /// Star-shapedness of a Green column about its pole.
    Green,
    /// Compare the lattice solution against walk-on-spheres estimates.
    McCompare,
    /// Check the structural conditions on a nonlinearity.
    Conditions,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let inputs = RunInputs {
        config_path: cli.config,
        out_dir: cli.out,
        seed: cli.seed,
        tol: cli.tol,
    };
    if let Err(e) = std::fs::create_dir_all(&inputs.out_dir) {
        eprintln!("cannot create output directory: {e}");
        return ExitCode::from(1);
    }
    let (name, result) = match cli.command {
        Command::Solve => ("solve", run::run_solve(&inputs)),
        Command::Analyze => ("analyze", run::run_analyze(&inputs)),
        Command::Green => ("green", run::run_green(&inputs)),
        Command::McCompare => ("mc-compare", run::run_mc_compare(&inputs)),
        Command::Conditions => ("conditions", run::run_conditions(&inputs)),
    };
    if let Err(e) = run::write_meta(&inputs, name) {
        eprintln!("{}", e.message());
        return ExitCode::from(1);
    }
    match result {
        Ok(()) => {
            println!("{name}: ok");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
