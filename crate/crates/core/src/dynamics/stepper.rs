use crate::energy::{
    bulk_energy, dissipation, elastic_energy, kinetic_energy, molecular_field_h, EnergyBreakdown,
};
use crate::grid::{
    advect, advect_adjoint, cell_velocity_gradient, cell_velocity_gradient_adjoint, divergence,
    velocity_advection, velocity_gradient_norm_sq, Grid, HelmholtzSolver, ScalarField, TensorField,
    VectorField, VelocityHelmholtz,
};
use crate::par;
use crate::tensor::{
    bulk_force, stretching_dual, stretching_s, QTensor, Stretching, VelocityGradient,
};

use super::{project, DynamicsError, LedgerRow, SimState, Splitting, StepperConfig};

/// `S(∇u, Q)` per cell with the cell-centred velocity gradient.
pub fn stretching_field(u: &VectorField, q: &TensorField, variant: Stretching) -> TensorField {
    let g = cell_velocity_gradient(u);
    q.map(|i, x| stretching_s(&VelocityGradient(g[i]), x, variant))
}

/// `L_Q(u) = (u·∇)Q − S(∇u, Q)`, the flow terms of the order-parameter equation.
pub fn coupling_operator(
    u: &VectorField,
    q: &TensorField,
    variant: Stretching,
) -> Result<TensorField, DynamicsError> {
    let adv = advect(u, q)?;
    Ok(adv.axpy(-1.0, &stretching_field(u, q, variant)))
}

/// Face force `F` with `⟨F, v⟩ = ⟨L_Q(v), H⟩` for every face vector `v`: the
/// transport part `H:∇Q` and the divergence of the stretching dual stress.
pub fn elastic_force(
    q: &TensorField,
    h: &TensorField,
    variant: Stretching,
) -> Result<VectorField, DynamicsError> {
    crate::grid::field_grids_match(&q.grid, &h.grid)?;
    let transport = advect_adjoint(q, h)?;
    let grid = q.grid;
    let t: Vec<_> = par::collect(grid.num_cells(), |i| {
        stretching_dual(&h.get(i), &q.get(i), variant)
    });
    let mut f = transport.axpy(-1.0, &cell_velocity_gradient_adjoint(grid, &t));
    f.enforce_walls();
    Ok(f)
}

/// Energies of a state together with its molecular field.
#[derive(Debug, Clone)]
pub(crate) struct Evaluated {
    pub energy: EnergyBreakdown,
    pub h: TensorField,
}

/// Advances [`SimState`]s under a fixed [`StepperConfig`], caching the
/// direct solvers for each step size it meets.
#[derive(Debug, Clone)]
pub struct Stepper {
    config: StepperConfig,
    kappa: f64,
    solvers: Vec<Solvers>,
}

/// Direct solvers for one step size.
#[derive(Debug, Clone)]
struct Solvers {
    dt_bits: u64,
    q: HelmholtzSolver,
    u: VelocityHelmholtz,
}

impl Stepper {
    /// Resolves the stabilisation constant against `initial` when it is not
    /// fixed by the configuration.
    pub fn new(config: StepperConfig, initial: &SimState) -> Result<Self, DynamicsError> {
        config.validate()?;
        let kappa = match config.splitting {
            Splitting::SemiImplicit => 0.0,
            Splitting::ConvexSplit => config
                .stabilization
                .unwrap_or_else(|| config.auto_stabilization(&initial.q)),
        };
        Ok(Stepper {
            config,
            kappa,
            solvers: Vec::new(),
        })
    }

    pub fn config(&self) -> &StepperConfig {
        &self.config
    }

    /// Stabilisation actually applied in the order-parameter step.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub(crate) fn evaluate(
        &self,
        u: &VectorField,
        q: &TensorField,
    ) -> Result<Evaluated, DynamicsError> {
        let p = &self.config.params;
        let h = molecular_field_h(q, p, self.config.bulk)?;
        let kinetic = kinetic_energy(u);
        let elastic = elastic_energy(q, p);
        let bulk = bulk_energy(q, p);
        let energy = EnergyBreakdown {
            kinetic,
            elastic,
            bulk,
            total: kinetic + elastic + bulk,
            dissipation: dissipation(u, &h, p)?,
        };
        Ok(Evaluated { energy, h })
    }

    fn solvers(&mut self, grid: Grid, dt: f64) -> &Solvers {
        let key = dt.to_bits();
        let pos = match self
            .solvers
            .iter()
            .position(|s| s.dt_bits == key && *s.q.grid() == grid)
        {
            Some(pos) => pos,
            None => {
                let p = &self.config.params;
                let alpha = 1.0 + dt * p.gamma * self.kappa;
                self.solvers.push(Solvers {
                    dt_bits: key,
                    q: HelmholtzSolver::new(grid, alpha, dt * p.gamma * p.epsilon),
                    u: VelocityHelmholtz::new(grid, 1.0, dt * p.nu),
                });
                self.solvers.len() - 1
            }
        };
        &self.solvers[pos]
    }

    /// Order-parameter step with the state's current velocity:
    /// `(1 + dtγκ − dtγεΔ) Qⁿ⁺¹ = (1 + dtγκ) Qⁿ − dt L_{Qⁿ}(u) − dtγ f(Qⁿ)`.
    pub fn step_q(&mut self, state: &SimState) -> Result<TensorField, DynamicsError> {
        self.step_q_dt(state, self.config.dt)
    }

    fn step_q_dt(&mut self, state: &SimState, dt: f64) -> Result<TensorField, DynamicsError> {
        let cfg = self.config;
        let p = cfg.params;
        let q = &state.q;
        let grid = q.grid;
        let keep = 1.0 + dt * p.gamma * self.kappa;
        let mut rhs =
            q.map(|_, x| QTensor(x.0 * keep - bulk_force(x, &p, cfg.bulk).0 * (dt * p.gamma)));
        if cfg.flow {
            rhs = rhs.axpy(-dt, &coupling_operator(&state.u, q, cfg.stretching)?);
        }
        let solver = &self.solvers(grid, dt).q;
        let comps = rhs.comps.iter().map(|c| solver.solve_plane(c)).collect();
        let out = TensorField { grid, comps };
        Ok(if cfg.project_each_step {
            out.project_symmetric_traceless()
        } else {
            out
        })
    }

    /// Projection step: `(I − dtνΔ) u* = uⁿ − dt (u·∇)uⁿ + dt F`, then
    /// `uⁿ⁺¹ = u* − ∇φ` with `Δφ = div u*`; returns `(uⁿ⁺¹, φ/dt)`.
    pub fn step_flow(
        &mut self,
        state: &SimState,
        force: &VectorField,
    ) -> Result<(VectorField, ScalarField), DynamicsError> {
        self.step_flow_dt(state, force, self.config.dt)
    }

    fn step_flow_dt(
        &mut self,
        state: &SimState,
        force: &VectorField,
        dt: f64,
    ) -> Result<(VectorField, ScalarField), DynamicsError> {
        let cfg = self.config;
        let u = &state.u;
        let grid = u.grid;
        crate::grid::field_grids_match(&grid, &force.grid)?;
        let mut rhs = u.axpy(-dt, &velocity_advection(u)).axpy(dt, force);
        rhs.enforce_walls();
        let star = self.solvers(grid, dt).u.solve(&rhs);
        let (next, phi) = project(&star, cfg.poisson)?;
        let residual = divergence(&next).norm();
        let scale = divergence(&star)
            .norm()
            .max(velocity_gradient_norm_sq(&next).sqrt());
        if residual > cfg.projection_tol * scale {
            return Err(DynamicsError::Projection {
                residual,
                tol: cfg.projection_tol * scale,
            });
        }
        let p = ScalarField {
            grid,
            data: phi.data.iter().map(|v| v / dt).collect(),
        };
        Ok((next, p))
    }

    /// One Gauss–Seidel step: flow with `Qⁿ`, then `Q` with `uⁿ⁺¹`.
    pub fn coupled_step(
        &mut self,
        state: &SimState,
    ) -> Result<(SimState, LedgerRow), DynamicsError> {
        let current = self.evaluate(&state.u, &state.q)?;
        let (next, _, row) = self.advance(state, &current, self.config.dt)?;
        Ok((next, row))
    }

    pub(crate) fn advance(
        &mut self,
        state: &SimState,
        current: &Evaluated,
        dt: f64,
    ) -> Result<(SimState, Evaluated, LedgerRow), DynamicsError> {
        let cfg = self.config;
        let mut mid = state.clone();
        if cfg.flow {
            let force = elastic_force(&state.q, &current.h, cfg.stretching)?;
            let (u, p) = self.step_flow_dt(state, &force, dt)?;
            mid.u = u;
            mid.p = p;
        }
        let q = self.step_q_dt(&mid, dt)?;
        let t = state.t + dt;
        let next = SimState {
            u: mid.u,
            p: mid.p,
            q,
            t,
            step: state.step + 1,
        };
        let evaluated = self.evaluate(&next.u, &next.q)?;
        let row = LedgerRow::new(t, dt, &current.energy, &evaluated.energy);
        Ok((next, evaluated, row))
    }
}
