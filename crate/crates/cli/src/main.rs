//! `impulse-game`: solve, simulate and certify zero-sum impulse games from a TOML config.
//!
//! Exit codes: 0 success, 1 invalid configuration or I/O failure, 2 numerical
//! failure (pivot breakdown, non-convergence, or a failed certificate).

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use run::{execute, Command};

#[derive(Parser)]
#[command(name = "impulse-game", version, about = "Zero-sum stochastic impulse games on a 1-D grid")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(clap::Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for Monte Carlo paths and monotonicity trials.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of joint halvings for `refine`.
    #[arg(long)]
    levels: Option<usize>,
}

#[derive(Subcommand)]
enum Sub {
    /// Value surface, t = 0 slice and action regions.
    Solve(Common),
    /// Optimal path and interventions from `[strategy] x_start`.
    Strategy(Common),
    /// Scheme certificates.
    Verify(Common),
    /// Refinement gaps under joint halving of h and dx.
    Refine(Common),
    /// Monte Carlo payoff of the feedback strategies against V(0, x_start).
    Mc(Common),
}

fn load(common: &Common) -> Result<(RunConfig, String), String> {
    let source = std::fs::read_to_string(&common.config)
        .map_err(|e| format!("cannot read {}: {e}", common.config.display()))?;
    let label = common.config.display();
    let mut config = RunConfig::parse(&source)
        .map_err(|errs| errs.iter().map(|e| format!("{label}: {e}")).collect::<Vec<_>>().join("\n"))?;
    if let Some(out) = &common.out {
        config.output.dir = out.clone();
    }
    if let Some(seed) = common.seed {
        config.monte_carlo.seed = seed;
        config.verify.seed = seed;
    }
    if let Some(levels) = common.levels {
        config.verify.levels = levels;
    }
    let late: Vec<String> = config.violations().into_iter().map(|(s, k, m)| format!("{s}.{k}: {m}")).collect();
    if !late.is_empty() {
        return Err(late.join("\n"));
    }
    Ok((config, source))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match &cli.command {
        Sub::Solve(c) => (Command::Solve, c),
        Sub::Strategy(c) => (Command::Strategy, c),
        Sub::Verify(c) => (Command::Verify, c),
        Sub::Refine(c) => (Command::Refine, c),
        Sub::Mc(c) => (Command::Mc, c),
    };
    let (config, source) = match load(common) {
        Ok(loaded) => loaded,
        Err(message) => {
            eprintln!("error: {message}");
            return ExitCode::from(1);
        }
    };
    match execute(command, &config, &source) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
