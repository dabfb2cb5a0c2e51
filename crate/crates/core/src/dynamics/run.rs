use super::stepper::Stepper;
use super::{DynamicsError, EnergyLedger, LedgerRow, SimState, StepperConfig};

/// Window (in steps) of the instability detector.
pub const INSTABILITY_WINDOW: usize = 10;
/// Relative energy growth over the window that aborts a run.
pub const INSTABILITY_GROWTH: f64 = 0.01;

/// Returned by hooks to continue or end a run early.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Called with each snapshot state.
pub type SnapshotHook<'a> = &'a mut dyn FnMut(&SimState) -> Control;
/// Called after every accepted step.
pub type StepHook<'a> = &'a mut dyn FnMut(&SimState, &LedgerRow) -> Control;

/// Observers and early-stopping rules for [`run`].
#[derive(Default)]
pub struct RunHooks<'a> {
    /// Snapshot cadence in steps; 0 disables snapshots. When enabled the
    /// initial and final states are always included.
    pub snapshot_every: usize,
    pub on_snapshot: Option<SnapshotHook<'a>>,
    pub on_step: Option<StepHook<'a>>,
    /// Stop once a row's dissipation falls to this value.
    pub dissipation_floor: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub state: SimState,
    pub ledger: EnergyLedger,
    /// True when a hook or the dissipation floor ended the run before `t_end`.
    pub stopped_early: bool,
    /// Stabilisation used by the order-parameter step.
    pub kappa: f64,
}

/// Number of steps needed to reach `t_end`; the last one may be shortened.
pub fn step_count(t0: f64, t_end: f64, dt: f64) -> usize {
    let x = (t_end - t0) / dt;
    if x <= 0.0 {
        0
    } else {
        (x * (1.0 - 1e-12)).ceil() as usize
    }
}

/// Integrates from `initial` to `t_end`.
pub fn run(
    initial: SimState,
    config: StepperConfig,
    t_end: f64,
    hooks: RunHooks<'_>,
) -> Result<RunSummary, DynamicsError> {
    config.validate()?;
    let t0 = initial.t;
    if t_end.is_nan() || t_end < t0 {
        return Err(DynamicsError::BadHorizon { t0, t_end });
    }
    let RunHooks {
        snapshot_every,
        mut on_snapshot,
        mut on_step,
        dissipation_floor,
    } = hooks;
    let mut stepper = Stepper::new(config, &initial)?;
    let mut current = stepper.evaluate(&initial.u, &initial.q)?;
    let mut ledger = EnergyLedger::new(t0, current.energy);
    let n = step_count(t0, t_end, config.dt);
    let mut state = initial;
    let snap = |s: &SimState, hook: &mut Option<SnapshotHook<'_>>| match hook {
        Some(f) if snapshot_every > 0 => f(s),
        _ => Control::Continue,
    };
    let mut stopped_early = false;
    if snap(&state, &mut on_snapshot) == Control::Stop {
        stopped_early = n > 0;
    }
    let mut k = 0;
    while k < n && !stopped_early {
        let t_next = if k + 1 == n {
            t_end
        } else {
            t0 + (k + 1) as f64 * config.dt
        };
        let dt = t_next - state.t;
        let (mut next, evaluated, row) = stepper.advance(&state, &current, dt)?;
        next.t = t_next;
        ledger.push(row);
        k += 1;
        if !next.is_finite() || !row.total.is_finite() {
            return Err(DynamicsError::NonFinite {
                dt: config.dt,
                step: k,
                t: next.t,
                ledger: Box::new(ledger),
            });
        }
        if let Some(growth) = window_growth(&ledger) {
            return Err(DynamicsError::Unstable {
                dt: config.dt,
                step: k,
                t: next.t,
                growth,
                window: INSTABILITY_WINDOW,
                ledger: Box::new(ledger),
            });
        }
        state = next;
        current = evaluated;
        if let Some(f) = on_step.as_mut() {
            if f(&state, &row) == Control::Stop {
                stopped_early = true;
            }
        }
        if dissipation_floor.is_some_and(|floor| row.dissipation <= floor) {
            stopped_early = true;
        }
        let due = snapshot_every > 0 && k % snapshot_every == 0;
        if (due || (snapshot_every > 0 && (k == n || stopped_early)))
            && snap(&state, &mut on_snapshot) == Control::Stop
        {
            stopped_early = true;
        }
    }
    stopped_early &= k < n;
    Ok(RunSummary {
        state,
        ledger,
        stopped_early,
        kappa: stepper.kappa(),
    })
}

/// Relative growth of the total energy over the last window, when it exceeds
/// the detector threshold.
fn window_growth(ledger: &EnergyLedger) -> Option<f64> {
    let totals = ledger.totals();
    let n = totals.len();
    if n <= INSTABILITY_WINDOW {
        return None;
    }
    let before = totals[n - 1 - INSTABILITY_WINDOW];
    let now = totals[n - 1];
    let growth = (now - before) / before.abs().max(f64::MIN_POSITIVE);
    (growth > INSTABILITY_GROWTH).then_some(growth)
}
