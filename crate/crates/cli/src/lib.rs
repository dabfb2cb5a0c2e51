//! Command-line front end: configuration, run orchestration, verification
//! suites and plot-ready exports.

pub mod commands;
pub mod config;
pub mod verify;

pub use commands::{cmd_analyze, cmd_relax, cmd_run, exit};
pub use config::{ConfigError, RunConfig};
pub use verify::cmd_verify;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "QTF_THREADS";

/// Sizes the global worker pool from `QTF_THREADS` when set.
pub fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got `{value}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("cannot size worker pool: {e}"))
}
