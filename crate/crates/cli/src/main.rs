use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gossipsim::sweep::Axis;
use gossipsim::{check, run, sweep};

/// Gossip learning simulator with node inaccessibility.
#[derive(Parser)]
#[command(name = "gossipsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write trace.csv and manifest.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one simulation per (value, seed) and summarize final rounds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated axis values; `inf` is accepted for alpha.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        /// Comma-separated seeds.
        #[arg(long)]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
        /// Parallel simulations; the GOSSIPSIM_JOBS variable takes precedence.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Validate the outputs of a run or sweep.
    Check {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, seed } => run::cmd_run(&config, &out, seed),
        Command::Sweep {
            config,
            axis,
            values,
            seeds,
            out,
            jobs,
        } => sweep::cmd_sweep(&config, axis, &values, &seeds, &out, jobs),
        Command::Check { out } => check::cmd_check(&out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gossipsim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
