//! Coupled time stepping: a projection step for the flow, a semi-implicit
//! step for the order parameter, and an energy ledger that tracks the
//! discrete dissipation law row by row.

mod ledger;
mod run;
mod stepper;

pub use ledger::{EnergyLedger, LedgerRow, LEDGER_HEADER};
pub use run::{
    run, step_count, Control, RunHooks, RunSummary, SnapshotHook, StepHook, INSTABILITY_GROWTH,
    INSTABILITY_WINDOW,
};
pub use stepper::{coupling_operator, elastic_force, stretching_field, Stepper};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{EnergyError, PotentialParams};
use crate::grid::{
    divergence, gradient, poisson_solve, Grid, GridError, PoissonMethod, ScalarField, TensorField,
    VectorField,
};
use crate::tensor::{BulkForce, Stretching};

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("time step must be positive and finite, got {0}")]
    BadTimeStep(f64),
    #[error("t_end = {t_end} precedes the initial time {t0}")]
    BadHorizon { t0: f64, t_end: f64 },
    #[error("projection left |div u| = {residual:e} above tolerance {tol:e}")]
    Projection { residual: f64, tol: f64 },
    #[error(
        "energy grew by {growth:.3e} over {window} steps at step {step} (t = {t}); dt = {dt} is above the stability threshold"
    )]
    Unstable {
        dt: f64,
        step: usize,
        t: f64,
        growth: f64,
        window: usize,
        ledger: Box<EnergyLedger>,
    },
    #[error("state became non-finite at step {step} (t = {t}); dt = {dt} is above the stability threshold")]
    NonFinite {
        dt: f64,
        step: usize,
        t: f64,
        ledger: Box<EnergyLedger>,
    },
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

impl DynamicsError {
    /// True for the instability detector verdicts.
    pub fn is_instability(&self) -> bool {
        matches!(
            self,
            DynamicsError::Unstable { .. } | DynamicsError::NonFinite { .. }
        )
    }

    /// The partial ledger carried by an instability abort.
    pub fn ledger(&self) -> Option<&EnergyLedger> {
        match self {
            DynamicsError::Unstable { ledger, .. } | DynamicsError::NonFinite { ledger, .. } => {
                Some(ledger)
            }
            _ => None,
        }
    }
}

impl From<crate::tensor::AlgebraError> for DynamicsError {
    fn from(e: crate::tensor::AlgebraError) -> Self {
        DynamicsError::Energy(e.into())
    }
}

/// Treatment of the bulk force in the order-parameter step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Splitting {
    /// Laplacian implicit, bulk force explicit.
    SemiImplicit,
    /// Adds an implicit stabilising quadratic `κ|Q|²/2` (convex) and treats
    /// the rest of the potential explicitly.
    ConvexSplit,
}

/// Scheme settings for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub dt: f64,
    pub params: PotentialParams,
    pub stretching: Stretching,
    pub bulk: BulkForce,
    /// Relative bound on `‖div u‖` after projection.
    pub projection_tol: f64,
    pub splitting: Splitting,
    /// Stabilisation `κ` for `ConvexSplit`; `None` derives it from the state.
    pub stabilization: Option<f64>,
    /// When false the velocity stays zero (pure gradient flow).
    pub flow: bool,
    /// Project `Q` onto symmetric traceless matrices after every step.
    pub project_each_step: bool,
    pub poisson: PoissonMethod,
}

impl StepperConfig {
    pub fn new(dt: f64, params: PotentialParams) -> Self {
        StepperConfig {
            dt,
            params,
            stretching: Stretching::Full,
            bulk: BulkForce::F,
            projection_tol: 1e-10,
            splitting: Splitting::SemiImplicit,
            stabilization: None,
            flow: true,
            project_each_step: false,
            poisson: PoissonMethod::Spectral,
        }
    }

    /// The trace- and symmetry-preserving pairing.
    pub fn trace_preserving(mut self) -> Self {
        self.stretching = Stretching::Antisym;
        self.bulk = BulkForce::FPz;
        self
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(DynamicsError::BadTimeStep(self.dt));
        }
        Ok(())
    }

    /// `κ ≥ ½ sup |D f|` over `|Q| ≤ R`, with `|Df| ≤ |a| + 2|b|R + 3cR²`.
    ///
    /// `R` is the larger of the state's largest cell norm and the radius where
    /// the radial potential bound turns (largest root of `c r² − |b| r + a`).
    pub fn auto_stabilization(&self, q: &TensorField) -> f64 {
        let p = &self.params;
        let disc = p.b * p.b - 4.0 * p.a * p.c;
        let r_turn = if disc >= 0.0 {
            ((p.b.abs() + disc.sqrt()) / (2.0 * p.c)).max(0.0)
        } else {
            0.0
        };
        let r_state = crate::par::max(q.grid.num_cells(), |i| q.get(i).norm());
        let r = r_state.max(r_turn);
        0.5 * (p.a.abs() + 2.0 * p.b.abs() * r + 3.0 * p.c * r * r)
    }
}

/// Full time-stepping state.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub u: VectorField,
    pub p: ScalarField,
    pub q: TensorField,
    pub t: f64,
    pub step: usize,
}

impl SimState {
    /// Builds a state, projecting `u` onto discretely divergence-free fields.
    pub fn new(u: VectorField, q: TensorField, t: f64) -> Result<Self, DynamicsError> {
        crate::grid::field_grids_match(&u.grid, &q.grid)?;
        let grid = q.grid;
        let (u, _) = project(&u, PoissonMethod::Spectral)?;
        Ok(SimState {
            u,
            p: ScalarField::zeros(grid),
            q,
            t,
            step: 0,
        })
    }

    /// Zero velocity with the given order parameter.
    pub fn at_rest(q: TensorField) -> Self {
        let grid = q.grid;
        SimState {
            u: VectorField::zeros(grid),
            p: ScalarField::zeros(grid),
            q,
            t: 0.0,
            step: 0,
        }
    }

    pub fn grid(&self) -> Grid {
        self.q.grid
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.p.is_finite() && self.q.is_finite()
    }
}

/// Removes the gradient part of `u`: returns `(u − ∇φ, φ)` with `Δφ = div u`.
pub fn project(
    u: &VectorField,
    method: PoissonMethod,
) -> Result<(VectorField, ScalarField), GridError> {
    let mut div = divergence(u);
    // Fluxes telescope (periodic) or vanish at walls, so any mean is rounding
    // of order eps|u|/h, which can dwarf the divergence of a nearly solenoidal u.
    let mean = div.mean();
    div.data.iter_mut().for_each(|x| *x -= mean);
    let phi = poisson_solve(&div, method)?;
    let mut out = u.axpy(-1.0, &gradient(&phi));
    out.enforce_walls();
    Ok((out, phi))
}
