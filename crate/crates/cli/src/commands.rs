//! `run`, `relax` and `analyze`: drive the solver, write artifacts, map
//! outcomes to exit codes.

use std::fmt::Write;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use qtensor_core::dynamics::{
    run, step_count, Control, DynamicsError, EnergyLedger, RunHooks, SimState, StepperConfig,
};
use qtensor_core::energy::{total_energy, EnergyBreakdown, PotentialParams};
use qtensor_core::equilibrium::{
    critical_point_residual_with, omega_limit_check, EquilibriumError, EquilibriumReport,
    OmegaOptions,
};
use qtensor_core::grid::io::{read_snapshot, write_tensor_snapshot};
use qtensor_core::grid::{Grid, GridError, TensorField, VectorField};
use qtensor_core::init::random_q;
use qtensor_core::tensor::{uniaxial, Vec3};

use crate::config::{ConfigError, InitKind, RunConfig};

pub const ENERGY_CSV: &str = "energy.csv";
pub const REPORT_JSON: &str = "report.json";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const SNAPSHOT_INDEX: &str = "snapshots.csv";
pub const EQUILIBRIUM_JSON: &str = "equilibrium.json";
pub const DECAY_CSV: &str = "decay.csv";

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const UNSTABLE: i32 = 2;
    pub const IO: i32 = 3;
    pub const NOT_RELAXED: i32 = 4;
    pub const NOT_CONVERGED: i32 = 5;
    /// `analyze` on a directory without the needed files.
    pub const MISSING: i32 = 1;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Unstable(DynamicsError),
    #[error("solver error: {0}")]
    Solver(DynamicsError),
    #[error("i/o error on {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("missing or unreadable artifact {path}: {message}")]
    Missing { path: PathBuf, message: String },
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Unstable(_) => exit::UNSTABLE,
            CliError::Solver(_) => exit::CONFIG,
            CliError::Io { .. } => exit::IO,
            CliError::Missing { .. } => exit::MISSING,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io {
        path: path.into(),
        message: e.to_string(),
    }
}

fn grid_io_err(path: &Path) -> impl FnOnce(GridError) -> CliError + '_ {
    move |e| CliError::Io {
        path: path.into(),
        message: e.to_string(),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialises");
    s.push('\n');
    s
}

/// Divergence-free vortex filling the domain in the x-y plane.
fn vortex(grid: Grid, amplitude: f64) -> VectorField {
    use std::f64::consts::PI;
    let (lx, ly) = (grid.length(0), grid.length(1));
    // stream function A sin²(πx/Lx) sin²(πy/Ly)
    VectorField::from_fn(grid, |a, x| {
        let (sx, sy) = ((PI * x[0] / lx).sin(), (PI * x[1] / ly).sin());
        let (s2x, s2y) = ((2.0 * PI * x[0] / lx).sin(), (2.0 * PI * x[1] / ly).sin());
        match a {
            0 => amplitude * sx * sx * (PI / ly) * s2y,
            1 => -amplitude * (PI / lx) * s2x * sy * sy,
            _ => 0.0,
        }
    })
}

/// Initial state described by the config.
pub fn initial_state(cfg: &RunConfig) -> Result<SimState, CliError> {
    let grid = cfg.grid()?;
    let q = match cfg.init {
        InitKind::Random => random_q(grid, cfg.seed).scale(cfg.init_amplitude),
        InitKind::Uniaxial => TensorField::constant(
            grid,
            &uniaxial(cfg.init_s, Vec3::x()).map_err(|e| ConfigError::Invalid(e.to_string()))?,
        ),
        InitKind::Zero => TensorField::zeros(grid),
    };
    if cfg.flow && cfg.velocity_amplitude != 0.0 {
        SimState::new(vortex(grid, cfg.velocity_amplitude), q, 0.0).map_err(CliError::Solver)
    } else {
        Ok(SimState::at_rest(q))
    }
}

/// Final-state diagnostics written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalNorms {
    pub u_norm: f64,
    pub q_norm: f64,
    pub max_abs_trace: f64,
    pub max_asymmetry: f64,
    pub critical_residual: f64,
    pub energy: EnergyBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    /// Effective configuration with `auto` values resolved.
    pub config: RunConfig,
    pub params: PotentialParams,
    pub workers: usize,
    pub steps_planned: usize,
    pub steps_taken: usize,
    pub t_final: f64,
    pub stopped_early: bool,
    /// `stable` or `unstable`.
    pub stability: String,
    pub diagnostic: Option<String>,
    pub kappa: f64,
    pub monotone: bool,
    pub max_law_residual: f64,
    pub snapshots: usize,
    pub final_state: Option<FinalNorms>,
    /// `relax` only: whether the critical-point residual met `residual_tol`.
    pub relaxed: Option<bool>,
}

fn final_norms(state: &SimState, stepper: &StepperConfig) -> Result<FinalNorms, CliError> {
    let p = &stepper.params;
    let energy = total_energy(&state.u, &state.q, p, stepper.bulk)
        .map_err(|e| CliError::Solver(e.into()))?;
    let critical_residual = critical_point_residual_with(&state.q, p, stepper.bulk)
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(FinalNorms {
        u_norm: state.u.norm(),
        q_norm: state.q.norm(),
        max_abs_trace: state.q.max_abs_trace(),
        max_asymmetry: state.q.max_asymmetry(),
        critical_residual,
        energy,
    })
}

/// Where snapshots go and which have been written.
struct SnapshotSink {
    dir: PathBuf,
    index: String,
    count: usize,
    error: Option<CliError>,
}

impl SnapshotSink {
    fn new(out: &Path) -> Self {
        SnapshotSink {
            dir: out.join(SNAPSHOT_DIR),
            index: "step,t,file\n".into(),
            count: 0,
            error: None,
        }
    }

    fn write(&mut self, state: &SimState) -> Control {
        let name = format!("step_{:08}.qtf", state.step);
        let path = self.dir.join(&name);
        match write_tensor_snapshot(&path, &state.q) {
            Ok(()) => {
                self.index.push_str(&format!(
                    "{},{:e},{}/{}\n",
                    state.step, state.t, SNAPSHOT_DIR, name
                ));
                self.count += 1;
                Control::Continue
            }
            Err(e) => {
                self.error = Some(grid_io_err(&path)(e));
                Control::Stop
            }
        }
    }
}

/// Removes snapshot files left by an earlier run in the same directory.
fn clear_snapshots(dir: &Path) -> Result<(), CliError> {
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("step_") && name.ends_with(".qtf") {
            fs::remove_file(&path).map_err(io_err(&path))?;
        }
    }
    Ok(())
}

/// Outcome of [`execute`]: the report plus the final state when the run finished.
pub struct Executed {
    pub report: RunReport,
    pub state: Option<SimState>,
}

/// Runs the configured simulation and writes every artifact into `cfg.out`.
/// Instability still writes the partial ledger and a report before failing.
pub fn execute(cfg: &RunConfig, command: &str) -> Result<Executed, CliError> {
    cfg.validate()?;
    let stepper = cfg.stepper()?;
    let initial = initial_state(cfg)?;
    let out = cfg.out.clone();
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    if cfg.snapshot_every > 0 {
        let dir = out.join(SNAPSHOT_DIR);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        clear_snapshots(&dir)?;
    }
    let mut sink = SnapshotSink::new(&out);
    let mut on_snapshot = |s: &SimState| sink.write(s);
    let hooks = RunHooks {
        snapshot_every: cfg.snapshot_every,
        on_snapshot: Some(&mut on_snapshot),
        on_step: None,
        dissipation_floor: (cfg.dissipation_floor > 0.0).then_some(cfg.dissipation_floor),
    };
    let planned = step_count(0.0, cfg.t_end, cfg.dt);
    let outcome = run(initial, stepper, cfg.t_end, hooks);
    if let Some(e) = sink.error.take() {
        return Err(e);
    }
    let mut report = RunReport {
        command: command.into(),
        config: cfg.resolved(stepper.params.mu, 0.0),
        params: stepper.params,
        workers: qtensor_core::par::workers(),
        steps_planned: planned,
        steps_taken: 0,
        t_final: 0.0,
        stopped_early: false,
        stability: "stable".into(),
        diagnostic: None,
        kappa: 0.0,
        monotone: true,
        max_law_residual: 0.0,
        snapshots: sink.count,
        final_state: None,
        relaxed: None,
    };
    let write_common = |ledger: &EnergyLedger, report: &RunReport| -> Result<(), CliError> {
        write_file(&out.join(ENERGY_CSV), ledger.to_csv().as_bytes())?;
        if cfg.snapshot_every > 0 {
            write_file(&out.join(SNAPSHOT_INDEX), sink.index.as_bytes())?;
        }
        write_file(&out.join(REPORT_JSON), to_json(report).as_bytes())
    };
    match outcome {
        Ok(summary) => {
            report.config = cfg.resolved(stepper.params.mu, summary.kappa);
            report.steps_taken = summary.ledger.len();
            report.t_final = summary.state.t;
            report.stopped_early = summary.stopped_early;
            report.kappa = summary.kappa;
            report.monotone = summary.ledger.all_monotone();
            report.max_law_residual = summary.ledger.max_law_residual();
            report.final_state = Some(final_norms(&summary.state, &stepper)?);
            write_common(&summary.ledger, &report)?;
            Ok(Executed {
                report,
                state: Some(summary.state),
            })
        }
        Err(e) if e.is_instability() => {
            let ledger = e.ledger().cloned().unwrap_or_else(|| EnergyLedger {
                initial: None,
                initial_t: 0.0,
                rows: vec![],
            });
            report.steps_taken = ledger.len();
            report.t_final = ledger.last().map_or(0.0, |r| r.t);
            report.stability = "unstable".into();
            report.diagnostic = Some(e.to_string());
            report.monotone = ledger.all_monotone();
            report.max_law_residual = ledger.max_law_residual();
            write_common(&ledger, &report)?;
            Err(CliError::Unstable(e))
        }
        Err(e) => Err(CliError::Solver(e)),
    }
}

fn report_failure(e: &CliError) -> i32 {
    eprintln!("error: {e}");
    e.code()
}

/// Integrates the coupled system and writes `energy.csv`, snapshots and `report.json`.
pub fn cmd_run(cfg: &RunConfig) -> i32 {
    match execute(cfg, "run") {
        Ok(done) => {
            let r = &done.report;
            println!(
                "run: {} steps to t = {}, monotone = {}, max law residual = {:e}",
                r.steps_taken, r.t_final, r.monotone, r.max_law_residual
            );
            exit::OK
        }
        Err(e) => report_failure(&e),
    }
}

/// Pure gradient flow (`u = 0`); succeeds only if the final state is critical.
pub fn cmd_relax(cfg: &RunConfig) -> i32 {
    let mut cfg = cfg.clone();
    cfg.flow = false;
    let mut done = match execute(&cfg, "relax") {
        Ok(done) => done,
        Err(e) => return report_failure(&e),
    };
    let residual = done
        .report
        .final_state
        .as_ref()
        .map_or(f64::INFINITY, |f| f.critical_residual);
    let relaxed = residual <= cfg.residual_tol;
    done.report.relaxed = Some(relaxed);
    let path = cfg.out.join(REPORT_JSON);
    if let Err(e) = write_file(&path, to_json(&done.report).as_bytes()) {
        return report_failure(&e);
    }
    if relaxed {
        println!(
            "relax: converged at t = {}, residual = {residual:e} <= {:e}",
            done.report.t_final, cfg.residual_tol
        );
        exit::OK
    } else {
        println!(
            "relax: not converged by t = {}, residual = {residual:e} > {:e}",
            done.report.t_final, cfg.residual_tol
        );
        exit::NOT_RELAXED
    }
}

/// `equilibrium.json` contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOutput {
    pub config: RunConfig,
    pub snapshots_used: usize,
    pub report: EquilibriumReport,
}

fn missing(path: &Path, message: impl ToString) -> CliError {
    CliError::Missing {
        path: path.into(),
        message: message.to_string(),
    }
}

/// Time-indexed order-parameter snapshots listed in `snapshots.csv`.
pub fn load_snapshots(dir: &Path, grid: Grid) -> Result<Vec<(f64, TensorField)>, CliError> {
    let index = dir.join(SNAPSHOT_INDEX);
    let text = fs::read_to_string(&index).map_err(|e| missing(&index, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let parts: Vec<&str> = line.split(',').collect();
        let bad = || missing(&index, format!("malformed line {}", n + 1));
        if parts.len() != 3 {
            return Err(bad());
        }
        let t: f64 = parts[1].parse().map_err(|_| bad())?;
        let path = dir.join(parts[2]);
        let snap = read_snapshot(&path).map_err(|e| missing(&path, e))?;
        out.push((t, snap.tensor_field(grid).map_err(|e| missing(&path, e))?));
    }
    Ok(out)
}

/// Analysis of a finished run directory.
pub fn analyze(dir: &Path, config: Option<&RunConfig>) -> Result<AnalysisOutput, CliError> {
    let cfg = match config {
        Some(c) => c.clone(),
        None => {
            let path = dir.join(REPORT_JSON);
            let text = fs::read_to_string(&path).map_err(|e| missing(&path, e))?;
            let report: RunReport = serde_json::from_str(&text).map_err(|e| missing(&path, e))?;
            report.config
        }
    };
    let grid = cfg.grid()?;
    let params = cfg.params()?;
    let ledger_path = dir.join(ENERGY_CSV);
    let text = fs::read_to_string(&ledger_path).map_err(|e| missing(&ledger_path, e))?;
    let ledger = EnergyLedger::from_csv(&text).map_err(|e| missing(&ledger_path, e))?;
    let snapshots = load_snapshots(dir, grid)?;
    let kinetic = ledger
        .last()
        .map(|r| r.kinetic)
        .or(ledger.initial.map(|e| e.kinetic))
        .unwrap_or(0.0);
    let u_norm = (2.0 * kinetic).max(0.0).sqrt();
    let options = OmegaOptions {
        bulk: cfg.bulk,
        norm: cfg.cauchy_norm,
        thresholds: cfg.thresholds(),
    };
    let report =
        omega_limit_check(&ledger, &snapshots, u_norm, &params, options).map_err(|e| match e {
            EquilibriumError::InsufficientSnapshots { .. } | EquilibriumError::EmptyLedger => {
                missing(&dir.join(SNAPSHOT_INDEX), e)
            }
            other => CliError::Config(ConfigError::Invalid(other.to_string())),
        })?;
    let output = AnalysisOutput {
        config: cfg,
        snapshots_used: snapshots.len(),
        report,
    };
    write_file(&dir.join(EQUILIBRIUM_JSON), to_json(&output).as_bytes())?;
    write_file(
        &dir.join(DECAY_CSV),
        decay_csv(&ledger, output.report.e_infinity).as_bytes(),
    )?;
    Ok(output)
}

/// `t,gap,log_gap` for every ledger row with `E − E_∞ > 0`.
pub fn decay_csv(ledger: &EnergyLedger, e_infinity: f64) -> String {
    let mut out = String::from("t,gap,log_gap\n");
    let initial = ledger.initial.map(|e| (ledger.initial_t, e.total));
    for (t, e) in initial
        .into_iter()
        .chain(ledger.rows.iter().map(|r| (r.t, r.total)))
    {
        let gap = e - e_infinity;
        if gap > 0.0 {
            let _ = writeln!(out, "{t:e},{gap:e},{:e}", gap.ln());
        }
    }
    out
}

/// Writes `equilibrium.json` and `decay.csv`; exit 0 only when converged.
pub fn cmd_analyze(dir: &Path, config: Option<&RunConfig>) -> i32 {
    match analyze(dir, config) {
        Ok(out) => {
            let r = &out.report;
            for c in &r.checks {
                println!(
                    "{:<18} {:>12.3e} <= {:>9.1e}  {}",
                    c.name,
                    c.value,
                    c.threshold,
                    if c.passed { "pass" } else { "FAIL" }
                );
            }
            match &r.decay {
                Some(fit) => println!("decay: {:?}, theta = {:.4}", fit.decay, fit.theta()),
                None => println!("decay: {}", r.decay_error.as_deref().unwrap_or("no fit")),
            }
            if r.converged {
                println!("analyze: converged, E_inf = {:e}", r.e_infinity);
                exit::OK
            } else {
                println!("analyze: not converged ({})", r.failed().join(", "));
                exit::NOT_CONVERGED
            }
        }
        Err(e) => report_failure(&e),
    }
}
