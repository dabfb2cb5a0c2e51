//! Self-checks run by `qtensorflow verify`: algebraic identities, discrete
//! adjointness, variational consistency, coercivity, a homogeneous-mode ODE
//! comparison, the ledger residual order, trace preservation and the decay
//! fit. Every draw comes from one seeded stream, so tables are reproducible.

use rand_core::SeedableRng;
use rand_xoshiro::SplitMix64;

use qtensor_core::dynamics::{
    coupling_operator, elastic_force, run, Control, EnergyLedger, LedgerRow, RunHooks, SimState,
    Stepper, StepperConfig,
};
use qtensor_core::energy::{molecular_field_h, q_energy, PotentialParams};
use qtensor_core::equilibrium::{lojasiewicz_fit, DecayClass};
use qtensor_core::grid::{
    advect, advect_adjoint, divergence, gradient, laplacian, Boundary, Grid, ScalarField,
    TensorField, VectorField, VelocityGradientField,
};
use qtensor_core::init::{random_q, uniform_centered};
use qtensor_core::tensor::{
    contract, potential_f, sigma_stress, stretching_dual, stretching_s, uniaxial, BulkForce, Mat3,
    QTensor, Stretching, Vec3, VelocityGradient,
};

/// Outcome of one suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub value: f64,
    /// Human-readable acceptance rule for `value`.
    pub rule: String,
    pub passed: bool,
}

fn show(x: f64) -> String {
    if x != 0.0 && (x.abs() < 1e-3 || x.abs() >= 1e4) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

impl SuiteResult {
    fn at_most(name: &'static str, value: f64, bound: f64) -> Self {
        SuiteResult {
            name,
            value,
            rule: format!("<= {}", show(bound)),
            passed: value <= bound,
        }
    }

    fn at_least(name: &'static str, value: f64, bound: f64) -> Self {
        SuiteResult {
            name,
            value,
            rule: format!(">= {}", show(bound)),
            passed: value >= bound,
        }
    }

    fn within(name: &'static str, value: f64, lo: f64, hi: f64) -> Self {
        SuiteResult {
            name,
            value,
            rule: format!("in [{}, {}]", show(lo), show(hi)),
            passed: (lo..=hi).contains(&value),
        }
    }
}

fn rand_mat(rng: &mut SplitMix64) -> Mat3 {
    Mat3::from_fn(|_, _| 2.0 * uniform_centered(rng))
}

fn rand_q(rng: &mut SplitMix64) -> QTensor {
    QTensor(rand_mat(rng)).symmetric_traceless()
}

fn smoke_params() -> PotentialParams {
    PotentialParams::new(-1.0, 0.0, 1.0, 0.1, 1.0, 1.0).expect("valid constants")
}

/// `σ(H, Q) : G = S(G, Q) : H` for symmetric traceless `H`, `Q`.
pub fn sigma_s_cancellation(rng: &mut SplitMix64, trials: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let (h, q, g) = (rand_q(rng), rand_q(rng), rand_mat(rng));
        let lhs = contract(&sigma_stress(&h, &q).0, &g);
        let rhs = contract(
            &stretching_s(&VelocityGradient(g), &q, Stretching::Full).0,
            &h.0,
        );
        let scale = h.norm() * q.norm() * g.norm();
        worst = worst.max((lhs - rhs).abs() / scale.max(f64::MIN_POSITIVE));
    }
    worst
}

/// `S(G, Q) : H = T : G` with `T` the dual stress, for general matrices.
fn stretching_duality(rng: &mut SplitMix64, trials: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for variant in [Stretching::Full, Stretching::Antisym] {
        for _ in 0..trials {
            let (h, q, g) = (
                QTensor(rand_mat(rng)),
                QTensor(rand_mat(rng)),
                rand_mat(rng),
            );
            let lhs = contract(&stretching_s(&VelocityGradient(g), &q, variant).0, &h.0);
            let rhs = contract(&stretching_dual(&h, &q, variant), &g);
            worst = worst.max((lhs - rhs).abs() / (h.norm() * q.norm() * g.norm()));
        }
    }
    worst
}

fn random_scalar(grid: Grid, rng: &mut SplitMix64) -> ScalarField {
    let mut s = ScalarField::zeros(grid);
    s.data.iter_mut().for_each(|x| *x = uniform_centered(rng));
    s
}

fn random_vector(grid: Grid, rng: &mut SplitMix64) -> VectorField {
    let mut v = VectorField::zeros(grid);
    v.comps
        .iter_mut()
        .for_each(|c| c.iter_mut().for_each(|x| *x = uniform_centered(rng)));
    v.enforce_walls();
    v
}

fn random_tensor(grid: Grid, rng: &mut SplitMix64) -> TensorField {
    let cells: Vec<QTensor> = (0..grid.num_cells())
        .map(|_| QTensor(rand_mat(rng)))
        .collect();
    TensorField::from_cells(grid, &cells)
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(f64::MIN_POSITIVE)
}

/// Every boundary and dimension combination the grid supports.
pub fn test_grids() -> Vec<Grid> {
    let mut out = Vec::new();
    for bc in [Boundary::Box, Boundary::Periodic] {
        out.push(Grid::new_2d(12, 9, 0.1, bc).expect("valid grid"));
        out.push(Grid::new(&[6, 5, 7], 0.2, bc).expect("valid grid"));
    }
    out
}

/// Worst normalised residual of the discrete adjoint pairs and of
/// `laplacian = div ∘ grad`.
pub fn summation_by_parts(rng: &mut SplitMix64) -> f64 {
    let mut worst: f64 = 0.0;
    for g in test_grids() {
        let phi = random_scalar(g, rng);
        let v = random_vector(g, rng);
        let (gp, dv) = (gradient(&phi), divergence(&v));
        worst = worst.max(rel(
            gp.inner(&v),
            -phi.inner(&dv),
            gp.norm() * v.norm() + phi.norm() * dv.norm(),
        ));
        let lap = laplacian(&phi);
        let dg = divergence(&gp);
        let diff = lap
            .data
            .iter()
            .zip(&dg.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let size = lap.data.iter().map(|a| a.abs()).fold(0.0, f64::max);
        worst = worst.max(diff / size.max(f64::MIN_POSITIVE));
        let w = random_vector(g, rng);
        let (gu, gw) = (VelocityGradientField::of(&v), VelocityGradientField::of(&w));
        let adj = gw.adjoint();
        worst = worst.max(rel(
            gu.inner(&gw),
            v.inner(&adj),
            gu.inner(&gu).sqrt() * gw.inner(&gw).sqrt() + v.norm() * adj.norm(),
        ));
        let (q, h) = (random_tensor(g, rng), random_tensor(g, rng));
        let (aq, ah) = (
            advect(&v, &q).expect("same grid"),
            advect_adjoint(&q, &h).expect("same grid"),
        );
        worst = worst.max(rel(
            aq.inner(&h),
            ah.inner(&v),
            aq.norm() * h.norm() + ah.norm() * v.norm(),
        ));
        for variant in [Stretching::Full, Stretching::Antisym] {
            let lq = coupling_operator(&v, &q, variant).expect("same grid");
            let f = elastic_force(&q, &h, variant).expect("same grid");
            worst = worst.max(rel(
                lq.inner(&h),
                f.inner(&v),
                lq.norm() * h.norm() + f.norm() * v.norm(),
            ));
        }
    }
    worst
}

/// Ratio of central-difference errors of `⟨H(Q), D⟩` at steps 1e-3 and 1e-4,
/// returned as (smallest, largest) over `pairs` random pairs on a 32² grid.
pub fn gradient_check(rng: &mut SplitMix64, pairs: usize) -> (f64, f64) {
    let g = Grid::new_2d(32, 32, 1.0 / 32.0, Boundary::Box).expect("valid grid");
    let params = PotentialParams::new(-1.0, 0.7, 1.0, 0.1, 1.0, 1.0).expect("valid constants");
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for _ in 0..pairs {
        let q = random_tensor(g, rng);
        // a long direction keeps the truncation error well above rounding at 1e-4
        let d = random_tensor(g, rng).scale(20.0);
        let exact = molecular_field_h(&q, &params, BulkForce::F)
            .expect("valid field")
            .inner(&d);
        let fd = |s: f64| {
            (q_energy(&q.axpy(s, &d), &params) - q_energy(&q.axpy(-s, &d), &params)) / (2.0 * s)
        };
        let ratio = (fd(1e-3) - exact).abs() / (fd(1e-4) - exact).abs();
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    (lo, hi)
}

/// Parameter sets for the coercivity suite, including `a < 0` and `b ≠ 0`.
pub const MU_PARAMS: [(f64, f64, f64); 5] = [
    (-1.0, 0.0, 1.0),
    (1.0, 3.0, 2.0),
    (-2.0, 1.0, 0.5),
    (0.5, -4.0, 1.0),
    (-0.3, 2.5, 3.0),
];

/// Smallest `(F(Q) + μ − (c/8)|Q|⁴) / (1 + |Q|⁴)` over random and uniaxial samples.
pub fn mu_certificate(rng: &mut SplitMix64, samples_per_set: usize) -> f64 {
    let mut worst = f64::INFINITY;
    for &(a, b, c) in &MU_PARAMS {
        let p = PotentialParams::new(a, b, c, 1.0, 1.0, 1.0).expect("valid constants");
        let reach = 4.0 * (1.0 + a.abs() + b.abs()) / c;
        for k in 0..samples_per_set {
            let r = reach * (uniform_centered(rng) + 0.5);
            let q = if k % 2 == 0 {
                let dir = rand_q(rng);
                QTensor(dir.0 * (r / dir.norm().max(1e-300)))
            } else {
                let n = Vec3::new(
                    uniform_centered(rng),
                    uniform_centered(rng),
                    uniform_centered(rng),
                );
                let n = if n.norm() > 1e-12 {
                    n.normalize()
                } else {
                    Vec3::x()
                };
                let s = r
                    * (1.5f64).sqrt()
                    * if uniform_centered(rng) < 0.0 {
                        -1.0
                    } else {
                        1.0
                    };
                uniaxial(s, n).expect("unit director")
            };
            let n4 = q.norm().powi(4);
            worst = worst.min((potential_f(&q, &p) + p.mu - 0.125 * c * n4) / (1.0 + n4));
        }
    }
    worst
}

/// Bulk force written out entrywise for the ODE oracle.
fn oracle_force(q: &Mat3, a: f64, b: f64, c: f64) -> Mat3 {
    let mut out = Mat3::zeros();
    let n2: f64 = q.iter().map(|x| x * x).sum();
    for i in 0..3 {
        for j in 0..3 {
            let mut quad = 0.0;
            for k in 0..3 {
                quad += q[(i, k)] * q[(k, j)] + q[(i, k)] * q[(j, k)] + q[(k, i)] * q[(k, j)];
            }
            out[(i, j)] = a * q[(i, j)] - b / 3.0 * quad + c * n2 * q[(i, j)];
        }
    }
    out
}

/// Max error of the stepper against RK4 at `dt/100` for `dQ/dt = −γ f(Q)` with
/// `u = 0` and constant `Q₀`, divided by `dt ‖f(Q₀)‖`.
pub fn ode_oracle(q0: QTensor, params: PotentialParams, dt: f64, t_end: f64) -> f64 {
    let grid = Grid::new_2d(8, 8, 0.125, Boundary::Box).expect("valid grid");
    let mut cfg = StepperConfig::new(dt, params);
    cfg.flow = false;
    let mut traj = Vec::new();
    let mut on_step = |s: &SimState, _: &LedgerRow| {
        traj.push((s.t, s.q.get(0).0, s.q.get(grid.num_cells() - 1).0));
        Control::Continue
    };
    let hooks = RunHooks {
        on_step: Some(&mut on_step),
        ..Default::default()
    };
    run(
        SimState::at_rest(TensorField::constant(grid, &q0)),
        cfg,
        t_end,
        hooks,
    )
    .expect("homogeneous run");
    let (a, b, c, gamma) = (params.a, params.b, params.c, params.gamma);
    let rhs = |q: &Mat3| oracle_force(q, a, b, c) * (-gamma);
    let fine = dt / 100.0;
    let mut y = q0.0;
    let mut t = 0.0;
    let mut worst: f64 = 0.0;
    for (ts, first, last) in traj {
        while t < ts - 0.5 * fine {
            let h = fine.min(ts - t);
            let k1 = rhs(&y);
            let k2 = rhs(&(y + k1 * (h / 2.0)));
            let k3 = rhs(&(y + k2 * (h / 2.0)));
            let k4 = rhs(&(y + k3 * h));
            y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            t += h;
        }
        worst = worst.max((first - y).norm()).max((last - y).norm());
    }
    worst / (dt * oracle_force(&q0.0, a, b, c).norm())
}

/// One-step law residual at `dt` over that at `dt/2`, from a smoke state
/// relaxed to `t_start`.
pub fn residual_order(n: usize, seed: u64, t_start: f64, dt: f64) -> f64 {
    let grid = Grid::new_2d(n, n, 1.0 / n as f64, Boundary::Box).expect("valid grid");
    let p = smoke_params();
    let base = run(
        SimState::at_rest(random_q(grid, seed)),
        StepperConfig::new(1e-3, p),
        t_start,
        RunHooks::default(),
    )
    .expect("smoke run")
    .state;
    let residual = |dt: f64| {
        let mut st = Stepper::new(StepperConfig::new(dt, p), &base).expect("valid stepper");
        st.coupled_step(&base).expect("stable step").1.law_residual
    };
    residual(dt) / residual(dt / 2.0)
}

/// Largest `|tr Q|` and `‖Q − Qᵗ‖` over a trace-preserving smoke run.
pub fn trace_drift(n: usize, seed: u64, dt: f64, steps: usize, vortex: f64) -> f64 {
    let grid = Grid::new_2d(n, n, 1.0 / n as f64, Boundary::Box).expect("valid grid");
    let cfg = StepperConfig::new(dt, smoke_params()).trace_preserving();
    let u = VectorField::from_fn(grid, |a, x| {
        let s = (std::f64::consts::PI * x[1 - a]).sin();
        if a == 0 {
            vortex * s
        } else {
            -vortex * s
        }
    });
    let init = SimState::new(u, random_q(grid, seed), 0.0).expect("projectable velocity");
    let mut worst: f64 = 0.0;
    let mut on_step = |s: &SimState, _: &LedgerRow| {
        worst = worst.max(s.q.max_abs_trace()).max(s.q.max_asymmetry());
        Control::Continue
    };
    let hooks = RunHooks {
        on_step: Some(&mut on_step),
        ..Default::default()
    };
    run(init, cfg, dt * steps as f64, hooks).expect("stable run");
    worst
}

/// Ledger with `E(t) = e_inf + gap(t)` on `n` uniform times in `(0, t_end]`.
pub fn synthetic_ledger(
    gap: impl Fn(f64) -> f64,
    e_inf: f64,
    t_end: f64,
    n: usize,
) -> EnergyLedger {
    let mut l = EnergyLedger::default();
    for i in 1..=n {
        let t = t_end * i as f64 / n as f64;
        let total = e_inf + gap(t);
        l.push(LedgerRow {
            t,
            kinetic: 0.0,
            elastic: 0.0,
            bulk: total,
            total,
            dissipation: 0.0,
            law_residual: 0.0,
            monotone: true,
        });
    }
    l
}

/// (R² of the exponential fit or 0 when misclassified, relative θ error on `(1+t)^{-1}`).
pub fn decay_fit_selftest() -> (f64, f64) {
    let exp = lojasiewicz_fit(
        &synthetic_ledger(|t| 3.0 * (-0.7 * t).exp(), 1.0, 20.0, 400),
        1.0,
    );
    let r2 = match exp {
        Ok(f) if matches!(f.decay, DecayClass::Exponential { .. }) => f.r_squared,
        _ => 0.0,
    };
    let pow = lojasiewicz_fit(
        &synthetic_ledger(|t| 1.0 / (1.0 + t), 0.5, 100.0, 1000),
        0.5,
    );
    let theta_err = match pow {
        Ok(f) if matches!(f.decay, DecayClass::PowerLaw { .. }) => {
            (f.theta() - 1.0 / 3.0).abs() * 3.0
        }
        _ => f64::INFINITY,
    };
    (r2, theta_err)
}

/// Runs every suite from one seeded stream.
pub fn run_suites(seed: u64) -> Vec<SuiteResult> {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut out = vec![
        SuiteResult::at_most(
            "sigma_s_cancellation",
            sigma_s_cancellation(&mut rng, 1000),
            1e-12,
        ),
        SuiteResult::at_most(
            "stretching_duality",
            stretching_duality(&mut rng, 1000),
            1e-12,
        ),
        SuiteResult::at_most("summation_by_parts", summation_by_parts(&mut rng), 1e-12),
    ];
    let (lo, hi) = gradient_check(&mut rng, 10);
    out.push(SuiteResult::within(
        "gradient_check_min_ratio",
        lo,
        80.0,
        120.0,
    ));
    out.push(SuiteResult::within(
        "gradient_check_max_ratio",
        hi,
        80.0,
        120.0,
    ));
    out.push(SuiteResult::at_least(
        "mu_certificate",
        mu_certificate(&mut rng, 20_000),
        -1e-12,
    ));
    let q0 = QTensor(rand_mat(&mut rng) * 0.5).symmetric_traceless();
    let p = PotentialParams::new(-1.0, 0.5, 1.0, 0.1, 1.0, 1.0).expect("valid constants");
    out.push(SuiteResult::at_most(
        "ode_oracle",
        ode_oracle(q0, p, 0.01, 10.0),
        5.0,
    ));
    let order_seed = uniform_bits(&mut rng);
    out.push(SuiteResult::within(
        "ledger_residual_order",
        residual_order(16, order_seed, 0.2, 4e-3),
        1.7,
        2.3,
    ));
    let trace_seed = uniform_bits(&mut rng);
    out.push(SuiteResult::at_most(
        "trace_symmetry",
        trace_drift(16, trace_seed, 1e-3, 1000, 1.0),
        1e-9,
    ));
    let (r2, theta_err) = decay_fit_selftest();
    out.push(SuiteResult::at_least("decay_fit_exponential_r2", r2, 0.999));
    out.push(SuiteResult::at_most(
        "decay_fit_theta_rel_error",
        theta_err,
        0.05,
    ));
    out
}

fn uniform_bits(rng: &mut SplitMix64) -> u64 {
    rand_core::RngCore::next_u64(rng)
}

/// Fixed-width pass/fail table.
pub fn format_table(results: &[SuiteResult]) -> String {
    let mut s = format!(
        "{:<28} {:>14}  {:<16} {}\n",
        "suite", "value", "rule", "result"
    );
    for r in results {
        s.push_str(&format!(
            "{:<28} {:>14.6e}  {:<16} {}\n",
            r.name,
            r.value,
            r.rule,
            if r.passed { "pass" } else { "FAIL" }
        ));
    }
    s
}

/// Prints the table; exit 0 iff every suite passes.
pub fn cmd_verify(seed: u64) -> i32 {
    let results = run_suites(seed);
    print!("{}", format_table(&results));
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed == 0 {
        println!("verify: all {} suites passed", results.len());
        0
    } else {
        println!("verify: {failed} of {} suites failed", results.len());
        1
    }
}
