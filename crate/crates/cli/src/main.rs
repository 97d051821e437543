use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use glwalk_cli::{run, CliError, Command, RunArgs};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    Lyapunov,
    Variance,
    BeCurve,
    RateFit,
    Depcoef,
    Blocks,
    Gap,
    Plot,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Lyapunov => Command::Lyapunov,
            Cmd::Variance => Command::Variance,
            Cmd::BeCurve => Command::BeCurve,
            Cmd::RateFit => Command::RateFit,
            Cmd::Depcoef => Command::Depcoef,
            Cmd::Blocks => Command::Blocks,
            Cmd::Gap => Command::Gap,
            Cmd::Plot => Command::Plot,
        }
    }
}

/// Simulation and statistical checks for left random walks on GL_d(R).
#[derive(Debug, Parser)]
#[command(name = "glwalk", version)]
struct Cli {
    command: Cmd,
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; outputs do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Input CSV for plot and rate-fit.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Plot kind: be_curve, rate_fit, depcoef or gap.
    #[arg(long)]
    kind: Option<String>,
    /// Moment order for reference rates.
    #[arg(long)]
    q: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("bad arguments");
            eprintln!("{}", CliError::config(first).stderr_line());
            return ExitCode::from(2);
        }
    };
    let args = RunArgs {
        config: cli.config,
        seed: cli.seed,
        workers: cli.workers,
        out: cli.out,
        budget_env: std::env::var("GLWALK_BUDGET").ok(),
        input: cli.input,
        kind: cli.kind,
        q: cli.q,
    };
    match run(cli.command.into(), &args) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.stderr_line());
            ExitCode::from(e.code() as u8)
        }
    }
}
