use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qtensorflow::{
    cmd_analyze, cmd_relax, cmd_run, cmd_verify, configure_threads, exit, RunConfig,
};

#[derive(Parser)]
#[command(
    name = "qtensorflow",
    version,
    about = "Q-tensor nematodynamics with an energy ledger"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Config file of `key = value` lines; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for random initial data and verification draws.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (run directory for `analyze`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Snapshot cadence in steps.
    #[arg(long, global = true)]
    snapshots: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the coupled flow and order parameter.
    Run,
    /// Pure gradient flow towards a critical point.
    Relax,
    /// Run the built-in self-checks.
    Verify,
    /// Convergence diagnostics of a finished run directory.
    Analyze,
}

fn load(cli: &Cli) -> Result<RunConfig, i32> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| {
            eprintln!("error: {e}");
            exit::CONFIG
        })?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(n) = cli.snapshots {
        cfg.snapshot_every = n;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(exit::CONFIG as u8);
    }
    let code = match load(&cli) {
        Err(code) => code,
        Ok(cfg) => match cli.command {
            Command::Run => cmd_run(&cfg),
            Command::Relax => cmd_relax(&cfg),
            Command::Verify => cmd_verify(cli.seed.unwrap_or(0)),
            Command::Analyze => {
                let config = cli.config.as_ref().map(|_| &cfg);
                cmd_analyze(&cfg.out, config)
            }
        },
    };
    ExitCode::from(code as u8)
}
