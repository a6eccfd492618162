//! `dcollapse rates|sweep|simulate|toy|validate --config <file> [--out <dir>] [--seed <u64>] [--threads <n>]`

use anyhow::Context;
use clap::{Parser, ValueEnum};
use dissipative_collapse::runner::{self, Command, Config, ExperimentSpec};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Rates,
    Sweep,
    Simulate,
    Toy,
    Validate,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Rates => Command::Rates,
            Cmd::Sweep => Command::Sweep,
            Cmd::Simulate => Command::Simulate,
            Cmd::Toy => Command::Toy,
            Cmd::Validate => Command::Validate,
        }
    }
}

#[derive(Parser)]
#[command(name = "dcollapse", version, about = "Dissipative DP/CSL collapse-model rates and simulations")]
struct Cli {
    command: Cmd,
    /// Flat `key = value` config file
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV/JSON artifacts
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed; overrides `seed` in the config
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let cfg = Config::from_file(&cli.config)?;
    let spec = ExperimentSpec::from_config(cli.command.into(), &cfg, cli.out, cli.seed)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("building thread pool")?;
    let summary = pool.install(|| runner::run(&spec))?;
    for path in &summary.artifacts {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
