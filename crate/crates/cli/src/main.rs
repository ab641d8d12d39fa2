//! `sprint`: command-line front end. Every subcommand prints one JSON summary
//! on stdout; diagnostics go to stderr.

mod commands;
mod staging;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sprint_core::Error;

/// Exit status for an unknown subcommand or malformed invocation.
const USAGE: u8 = 64;

#[derive(Debug, Parser)]
#[command(name = "sprint", version, about = "Single-photon extraction simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration document; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created atomically.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override numerics.master_seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Replace an existing output directory.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Transform {
    Annihilate,
    Extract,
    Thin,
    Stats,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Steady-state coefficients and derived quantities.
    Analytic,
    /// Apply â, ŝ or loss to a photon-number distribution.
    Fockops {
        /// CSV with columns n, p.
        #[arg(long, conflicts_with_all = ["poisson", "thermal", "fock"])]
        input: Option<PathBuf>,
        #[arg(long)]
        poisson: Option<f64>,
        #[arg(long)]
        thermal: Option<f64>,
        #[arg(long)]
        fock: Option<usize>,
        #[arg(long, value_enum, default_value = "stats")]
        transform: Transform,
        /// Transmission for `thin`.
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
    },
    /// Trajectories and master equation for the configured pulse.
    Simulate {
        /// Input photon number; defaults to the configured pulse.
        #[arg(long)]
        n_bar: Option<f64>,
    },
    /// Detector cascade applied to a jump log.
    Clicks {
        /// CSV with columns trajectory_id, t_ns, channel.
        #[arg(long)]
        jumps: PathBuf,
        /// Number of trajectories behind the log; defaults to numerics.n_traj.
        #[arg(long)]
        trajectories: Option<usize>,
    },
    /// Photon-number distribution from a click histogram.
    Reconstruct {
        /// CSV with columns n, count.
        #[arg(long)]
        histogram: PathBuf,
        /// Bootstrap rounds; defaults to scenario.bootstrap.
        #[arg(long)]
        bootstrap: Option<usize>,
        #[arg(long)]
        k_max: Option<usize>,
    },
    /// Figure datasets for the configured scenario.
    Figures {
        /// Reference table to compare the run against.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Write a reference table from this run.
        #[arg(long)]
        write_reference: Option<PathBuf>,
    },
    /// Cross-checks between independent solvers.
    Validate {
        /// Fewer trajectories and click samples.
        #[arg(long)]
        quick: bool,
    },
}

fn exit_status(err: &Error) -> u8 {
    if err.is_numerical() {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { USAGE } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Analytic => commands::analytic(&cli.common),
        Command::Fockops {
            input,
            poisson,
            thermal,
            fock,
            transform,
            eta,
        } => commands::fockops(&cli.common, input, poisson, thermal, fock, transform, eta),
        Command::Simulate { n_bar } => commands::simulate(&cli.common, n_bar),
        Command::Clicks { jumps, trajectories } => commands::clicks(&cli.common, &jumps, trajectories),
        Command::Reconstruct {
            histogram,
            bootstrap,
            k_max,
        } => commands::reconstruct(&cli.common, &histogram, bootstrap, k_max),
        Command::Figures {
            reference,
            write_reference,
        } => commands::figures(&cli.common, reference, write_reference),
        Command::Validate { quick } => commands::validate(&cli.common, quick),
    };
    match result {
        Ok(outcome) => {
            println!("{}", serde_json::to_string_pretty(&outcome.summary).expect("JSON value"));
            ExitCode::from(if outcome.passed { 0 } else { 1 })
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_status(&err))
        }
    }
}
