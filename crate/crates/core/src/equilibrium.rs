//! Long-time diagnostics: distance to the critical set, Cauchy increments of
//! the trajectory, the limit energy and the decay rate toward it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::EnergyLedger;
use crate::energy::{molecular_field_h, q_energy, EnergyError, PotentialParams};
use crate::grid::{Grid, GridError, HelmholtzSolver, ScalarField, TensorField};
use crate::tensor::BulkForce;

#[derive(Debug, Error)]
pub enum EquilibriumError {
    #[error("need at least {need} snapshots, got {got}")]
    InsufficientSnapshots { need: usize, got: usize },
    #[error("snapshot times must increase")]
    UnorderedSnapshots,
    #[error("empty energy ledger")]
    EmptyLedger,
    #[error("decay fit undefined: only {points} rows lie strictly above E_inf")]
    WindowTouchesLimit { points: usize },
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Norm used for trajectory increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CauchyNorm {
    L2,
    /// Discrete `H⁻¹`: the mean of each component in `L²` plus
    /// `⟨d, (−Δ)⁻¹ d⟩` on the zero-mean remainder.
    HMinus1,
}

/// Convergence thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub u_norm: f64,
    pub critical_residual: f64,
    pub cauchy: f64,
    /// `|𝓔_μ(Q_final) − E_∞| ≤ energy_gap·(1 + |E_∞|)`.
    pub energy_gap: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            u_norm: 1e-8,
            critical_residual: 1e-6,
            cauchy: 1e-8,
            energy_gap: 1e-10,
        }
    }
}

/// `‖−εΔQ + f(Q)‖` with the given bulk force.
pub fn critical_point_residual_with(
    q: &TensorField,
    params: &PotentialParams,
    bulk: BulkForce,
) -> Result<f64, EquilibriumError> {
    Ok(molecular_field_h(q, params, bulk)?.norm())
}

/// `‖−εΔQ + f(Q)‖` with the full bulk force `f`.
pub fn critical_point_residual(q: &TensorField, params: &PotentialParams) -> f64 {
    molecular_field_h(q, params, BulkForce::F)
        .map(|h| h.norm())
        .unwrap_or(f64::NAN)
}

fn increment_norm(
    a: &TensorField,
    b: &TensorField,
    norm: CauchyNorm,
) -> Result<f64, EquilibriumError> {
    crate::grid::field_grids_match(&a.grid, &b.grid)?;
    let d = b.axpy(-1.0, a);
    Ok(match norm {
        CauchyNorm::L2 => d.norm(),
        CauchyNorm::HMinus1 => h_minus_1_norm(&d)?,
    })
}

fn h_minus_1_norm(d: &TensorField) -> Result<f64, EquilibriumError> {
    let grid = d.grid;
    // (−Δ)⁻¹ with the constant mode dropped
    let inverse = HelmholtzSolver::new(grid, 0.0, 1.0);
    let mut total = 0.0;
    for c in &d.comps {
        let f = ScalarField {
            grid,
            data: c.clone(),
        };
        let m = f.mean();
        let rest = ScalarField {
            grid,
            data: c.iter().map(|x| x - m).collect(),
        };
        total += m * m * grid.domain_volume() + rest.inner(&inverse.solve(&rest));
    }
    Ok(total.max(0.0).sqrt())
}

/// Snapshots in the final tenth of the covered time span, widened to at
/// least the last three.
pub fn tail(snapshots: &[(f64, TensorField)]) -> &[(f64, TensorField)] {
    let n = snapshots.len();
    if n == 0 {
        return snapshots;
    }
    let t_last = snapshots[n - 1].0;
    let cut = t_last - 0.1 * (t_last - snapshots[0].0);
    let first = snapshots
        .iter()
        .position(|(t, _)| *t >= cut)
        .unwrap_or(n - 1);
    &snapshots[first.min(n.saturating_sub(3))..]
}

/// Norms of consecutive differences over all snapshots.
pub fn consecutive_increments(
    snapshots: &[(f64, TensorField)],
    norm: CauchyNorm,
) -> Result<Vec<f64>, EquilibriumError> {
    if snapshots
        .windows(2)
        .any(|w| w[1].0.partial_cmp(&w[0].0) != Some(std::cmp::Ordering::Greater))
    {
        return Err(EquilibriumError::UnorderedSnapshots);
    }
    snapshots
        .windows(2)
        .map(|w| increment_norm(&w[0].1, &w[1].1, norm))
        .collect()
}

/// Largest consecutive increment over the tail of the trajectory.
pub fn cauchy_certificate(
    snapshots: &[(f64, TensorField)],
    norm: CauchyNorm,
) -> Result<f64, EquilibriumError> {
    if snapshots.len() < 2 {
        return Err(EquilibriumError::InsufficientSnapshots {
            need: 2,
            got: snapshots.len(),
        });
    }
    Ok(consecutive_increments(tail(snapshots), norm)?
        .into_iter()
        .fold(0.0, f64::max))
}

/// Limit energy: median total over the final tenth of the ledger rows.
pub fn tail_median_energy(ledger: &EnergyLedger) -> Result<f64, EquilibriumError> {
    let n = ledger.rows.len();
    if n == 0 {
        return Err(EquilibriumError::EmptyLedger);
    }
    let k = n.div_ceil(10);
    let mut tail: Vec<f64> = ledger.rows[n - k..].iter().map(|r| r.total).collect();
    tail.sort_by(f64::total_cmp);
    Ok(if k % 2 == 1 {
        tail[k / 2]
    } else {
        0.5 * (tail[k / 2 - 1] + tail[k / 2])
    })
}

/// Shape of the energy decay toward its limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum DecayClass {
    /// `E − E_∞ ≈ C e^{−rate·t}`, the `θ = 1/2` case.
    Exponential { rate: f64 },
    /// `E − E_∞ ≈ C (t + shift)^{−β}` with `θ = β/(1 + 2β)`.
    PowerLaw { beta: f64, shift: f64, theta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub decay: DecayClass,
    /// Coefficient of determination of the accepted regression.
    pub r_squared: f64,
    /// Rows used by the fit.
    pub points: usize,
}

impl DecayFit {
    /// `θ` estimate; `1/2` for exponential decay.
    pub fn theta(&self) -> f64 {
        match self.decay {
            DecayClass::Exponential { .. } => 0.5,
            DecayClass::PowerLaw { theta, .. } => theta,
        }
    }
}

/// R² threshold above which a log-linear decay is called exponential.
pub const EXPONENTIAL_R2: f64 = 0.99;

/// Least squares `y ≈ c + s·x`; returns `(s, c, R²)`.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if syy > 0.0 {
        (sxy * sxy / (sxx * syy)).min(1.0)
    } else {
        1.0
    };
    (slope, my - slope * mx, r2)
}

/// Classifies the decay of `E(t) − E_∞` over the leading rows that stay
/// strictly above the limit.
pub fn lojasiewicz_fit(
    ledger: &EnergyLedger,
    e_infinity: f64,
) -> Result<DecayFit, EquilibriumError> {
    let floor = 64.0 * f64::EPSILON * (1.0 + e_infinity.abs());
    let rows: Vec<(f64, f64)> = ledger
        .rows
        .iter()
        .map(|r| (r.t, r.total - e_infinity))
        .take_while(|(_, gap)| *gap > floor)
        .collect();
    if rows.len() < 3 {
        return Err(EquilibriumError::WindowTouchesLimit { points: rows.len() });
    }
    let t: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.1.ln()).collect();
    let (slope, _, r2) = linear_fit(&t, &y);
    if r2 >= EXPONENTIAL_R2 && slope < 0.0 {
        return Ok(DecayFit {
            decay: DecayClass::Exponential { rate: -slope },
            r_squared: r2,
            points: rows.len(),
        });
    }
    // log(E − E_∞) ≈ c − β log(t + s): scan the shift on a log grid, then refine.
    let t0 = t[0];
    let span = (t[t.len() - 1] - t0).max(f64::MIN_POSITIVE);
    let score = |log_s: f64| {
        let s = log_s.exp();
        let x: Vec<f64> = t.iter().map(|v| (v - t0 + s).ln()).collect();
        linear_fit(&x, &y)
    };
    let (lo, hi) = ((1e-6 * span).ln(), (1e3 * span).ln());
    let steps = 200;
    let mut best = lo;
    let mut best_r2 = f64::NEG_INFINITY;
    for i in 0..=steps {
        let ls = lo + (hi - lo) * i as f64 / steps as f64;
        let r = score(ls).2;
        if r > best_r2 {
            best_r2 = r;
            best = ls;
        }
    }
    let width = (hi - lo) / steps as f64;
    let (mut a, mut b) = (best - width, best + width);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if score(c).2 >= score(d).2 {
            b = d;
        } else {
            a = c;
        }
    }
    let log_s = 0.5 * (a + b);
    let (slope, _, r2) = score(log_s);
    let beta = -slope;
    let theta = beta / (1.0 + 2.0 * beta);
    Ok(DecayFit {
        decay: DecayClass::PowerLaw {
            beta,
            shift: log_s.exp() - t0,
            theta,
        },
        r_squared: r2,
        points: rows.len(),
    })
}

/// One named convergence test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            threshold,
            passed: value <= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub e_infinity: f64,
    pub u_norm_final: f64,
    pub critical_residual: f64,
    pub cauchy_sup: f64,
    /// `|𝓔_μ(Q_final) − E_∞|`.
    pub energy_gap: f64,
    pub decay: Option<DecayFit>,
    /// Why the decay fit is missing, when it is.
    pub decay_error: Option<String>,
    pub thresholds: Thresholds,
    pub checks: Vec<Check>,
    pub converged: bool,
}

impl EquilibriumReport {
    pub fn failed(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }
}

/// Inputs of [`omega_limit_check`] besides the ledger and snapshots.
#[derive(Debug, Clone, Copy)]
pub struct OmegaOptions {
    pub bulk: BulkForce,
    pub norm: CauchyNorm,
    pub thresholds: Thresholds,
}

impl Default for OmegaOptions {
    fn default() -> Self {
        OmegaOptions {
            bulk: BulkForce::F,
            norm: CauchyNorm::L2,
            thresholds: Thresholds::default(),
        }
    }
}

/// Tests whether a trajectory has settled on the critical set.
pub fn omega_limit_check(
    ledger: &EnergyLedger,
    snapshots: &[(f64, TensorField)],
    u_norm_final: f64,
    params: &PotentialParams,
    options: OmegaOptions,
) -> Result<EquilibriumReport, EquilibriumError> {
    if snapshots.len() < 3 {
        return Err(EquilibriumError::InsufficientSnapshots {
            need: 3,
            got: snapshots.len(),
        });
    }
    let thr = options.thresholds;
    let e_infinity = tail_median_energy(ledger)?;
    let q_final = &snapshots[snapshots.len() - 1].1;
    let critical_residual = critical_point_residual_with(q_final, params, options.bulk)?;
    let cauchy_sup = cauchy_certificate(snapshots, options.norm)?;
    let energy_gap = (q_energy(q_final, params) - e_infinity).abs();
    let (decay, decay_error) = match lojasiewicz_fit(ledger, e_infinity) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let checks = vec![
        Check::new("u_norm", u_norm_final, thr.u_norm),
        Check::new(
            "critical_residual",
            critical_residual,
            thr.critical_residual,
        ),
        Check::new("cauchy", cauchy_sup, thr.cauchy),
        Check::new(
            "energy_gap",
            energy_gap,
            thr.energy_gap * (1.0 + e_infinity.abs()),
        ),
    ];
    let converged = checks.iter().all(|c| c.passed);
    Ok(EquilibriumReport {
        e_infinity,
        u_norm_final,
        critical_residual,
        cauchy_sup,
        energy_gap,
        decay,
        decay_error,
        thresholds: thr,
        checks,
        converged,
    })
}

/// Discrete Poincaré constant `C` with `‖u‖ ≤ C‖∇u‖` for no-slip MAC
/// velocities; `None` on periodic grids, where constants have no gradient.
pub fn poincare_constant(grid: &Grid) -> Option<f64> {
    if grid.periodic() {
        return None;
    }
    let h = grid.h();
    let lambda: f64 = (0..grid.ndim())
        .map(|a| 2.0 * (1.0 - (std::f64::consts::PI / grid.dims()[a] as f64).cos()) / (h * h))
        .sum();
    Some(1.0 / lambda.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::LedgerRow;
    use crate::grid::{velocity_gradient_norm_sq, Boundary, VectorField};
    use crate::tensor::{uniaxial, QTensor, Vec3};
    use proptest::prelude::*;

    fn synthetic(f: impl Fn(f64) -> f64, e_inf: f64, t_end: f64, n: usize) -> EnergyLedger {
        let mut l = EnergyLedger::default();
        for i in 1..=n {
            let t = t_end * i as f64 / n as f64;
            let total = e_inf + f(t);
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

    fn params(a: f64) -> PotentialParams {
        PotentialParams::new(a, 0.0, 1.0, 0.1, 1.0, 1.0).unwrap()
    }

    fn grid() -> Grid {
        Grid::new_2d(8, 8, 0.125, Boundary::Box).unwrap()
    }

    #[test]
    fn exponential_decay_is_classified() {
        let fit = lojasiewicz_fit(&synthetic(|t| (-t).exp(), 2.0, 20.0, 400), 2.0).unwrap();
        assert!(matches!(fit.decay, DecayClass::Exponential { rate } if (rate - 1.0).abs() < 1e-9));
        assert!(fit.r_squared >= 0.999);
        assert_eq!(fit.theta(), 0.5);
    }

    #[test]
    fn power_law_theta_is_recovered() {
        let fit = lojasiewicz_fit(&synthetic(|t| 1.0 / (1.0 + t), 0.5, 100.0, 1000), 0.5).unwrap();
        match fit.decay {
            DecayClass::PowerLaw { beta, theta, .. } => {
                assert!((beta - 1.0).abs() < 0.05, "beta {beta}");
                assert!((theta - 1.0 / 3.0).abs() <= 0.05 / 3.0, "theta {theta}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_ledger_is_an_error() {
        let l = synthetic(|_| 0.0, 1.0, 1.0, 10);
        assert!(matches!(
            lojasiewicz_fit(&l, 1.0),
            Err(EquilibriumError::WindowTouchesLimit { points: 0 })
        ));
    }

    #[test]
    fn tail_median_over_last_tenth() {
        let l = synthetic(|t| 100.0 - t, 0.0, 100.0, 100);
        // last ten rows: totals 9..0, median 4.5
        assert_eq!(tail_median_energy(&l).unwrap(), 4.5);
        assert!(tail_median_energy(&EnergyLedger::default()).is_err());
    }

    #[test]
    fn equilibrium_residuals() {
        let g = grid();
        assert_eq!(
            critical_point_residual(&TensorField::zeros(g), &params(1.0)),
            0.0
        );
        // a s + (2c/3) s³ = 0 for a uniaxial constant state; find s by Newton
        let (a, c) = (-1.0, 1.0);
        let mut s: f64 = 1.0;
        for _ in 0..50 {
            s -= (a * s + 2.0 * c / 3.0 * s.powi(3)) / (a + 2.0 * c * s * s);
        }
        assert!((s - 1.5f64.sqrt()).abs() < 1e-14);
        let q = TensorField::constant(g, &uniaxial(s, Vec3::new(0.0, 0.6, 0.8)).unwrap());
        assert!(critical_point_residual(&q, &params(-1.0)) < 1e-14);
        let off = TensorField::constant(g, &uniaxial(0.9 * s, Vec3::z()).unwrap());
        assert!(critical_point_residual(&off, &params(-1.0)) > 1e-2);
    }

    fn snaps(fields: &[TensorField]) -> Vec<(f64, TensorField)> {
        fields
            .iter()
            .enumerate()
            .map(|(i, f)| (i as f64, f.clone()))
            .collect()
    }

    #[test]
    fn cauchy_contracts() {
        let g = grid();
        let a = TensorField::constant(g, &QTensor::from_diagonal([0.1, 0.2, -0.3]));
        let b = TensorField::from_fn(g, |x| QTensor::from_diagonal([x[0], -x[0], 0.0]));
        let same = snaps(&[a.clone(), a.clone(), a.clone(), a.clone()]);
        for norm in [CauchyNorm::L2, CauchyNorm::HMinus1] {
            assert_eq!(cauchy_certificate(&same, norm).unwrap(), 0.0);
            let alt = snaps(&[a.clone(), b.clone(), a.clone(), b.clone()]);
            let inc = consecutive_increments(&alt, norm).unwrap();
            assert!(
                inc[0] > 0.0 && (inc[1] - inc[0]).abs() < 1e-14 && (inc[2] - inc[0]).abs() < 1e-14
            );
            assert_eq!(cauchy_certificate(&alt, norm).unwrap(), inc[0]);
        }
        assert!(cauchy_certificate(&same[..1], CauchyNorm::L2).is_err());
        let back = vec![(1.0, a.clone()), (0.5, a.clone())];
        assert!(consecutive_increments(&back, CauchyNorm::L2).is_err());
    }

    #[test]
    fn h_minus_1_is_weaker_than_l2_on_oscillations() {
        let g = Grid::new_2d(16, 16, 1.0 / 16.0, Boundary::Box).unwrap();
        let osc = TensorField::from_fn(g, |x| {
            QTensor::from_diagonal([(8.0 * std::f64::consts::PI * x[0]).cos(), 0.0, 0.0])
        });
        let z = TensorField::zeros(g);
        let l2 = increment_norm(&z, &osc, CauchyNorm::L2).unwrap();
        let hm = increment_norm(&z, &osc, CauchyNorm::HMinus1).unwrap();
        assert!(hm < 0.1 * l2, "{hm} {l2}");
    }

    #[test]
    fn tail_keeps_at_least_three() {
        let g = grid();
        let s: Vec<(f64, TensorField)> =
            (0..20).map(|i| (i as f64, TensorField::zeros(g))).collect();
        assert_eq!(tail(&s).len(), 3);
        let dense: Vec<(f64, TensorField)> = (0..=100)
            .map(|i| (i as f64, TensorField::zeros(g)))
            .collect();
        assert_eq!(tail(&dense).len(), 11);
    }

    #[test]
    fn omega_limit_of_minimiser() {
        let g = grid();
        let p = params(1.0);
        let e_min = p.mu * g.domain_volume();
        let l = synthetic(|t| (-t).exp() * 1e-3, e_min, 40.0, 400);
        let z = TensorField::zeros(g);
        let s = snaps(&[z.clone(), z.clone(), z.clone()]);
        let r = omega_limit_check(&l, &s, 0.0, &p, OmegaOptions::default()).unwrap();
        assert!(r.converged, "{:?}", r.failed());
        assert!((r.e_infinity - e_min).abs() < 1e-12);
        assert!(matches!(
            r.decay.unwrap().decay,
            DecayClass::Exponential { .. }
        ));
        let short = synthetic(|t| (-t).exp(), e_min, 1.0, 50);
        let q = TensorField::constant(g, &uniaxial(0.4, Vec3::x()).unwrap());
        let s = snaps(&[z.clone(), q.clone(), q]);
        let r = omega_limit_check(&short, &s, 1e-3, &p, OmegaOptions::default()).unwrap();
        assert!(!r.converged);
        assert_eq!(
            r.failed(),
            vec!["u_norm", "critical_residual", "cauchy", "energy_gap"]
        );
        assert!(omega_limit_check(&short, &s[..2], 0.0, &p, OmegaOptions::default()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn poincare_bound_holds(seed in any::<u64>(), nx in 4usize..10, ny in 4usize..10) {
            use rand_core::{RngCore, SeedableRng};
            let g = Grid::new_2d(nx, ny, 0.3, Boundary::Box).unwrap();
            let mut rng = rand_xoshiro::SplitMix64::seed_from_u64(seed);
            let mut u = VectorField::zeros(g);
            for c in u.comps.iter_mut() {
                c.iter_mut().for_each(|x| *x = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 0.5);
            }
            u.enforce_walls();
            let cp = poincare_constant(&g).unwrap();
            prop_assert!(u.norm() <= cp * velocity_gradient_norm_sq(&u).sqrt() * (1.0 + 1e-12));
        }

        #[test]
        fn fitted_limit_lies_in_tail_range(vals in proptest::collection::vec(0.0..10.0f64, 1..60)) {
            let mut l = EnergyLedger::default();
            for (i, v) in vals.iter().enumerate() {
                l.push(LedgerRow { t: i as f64, kinetic: 0.0, elastic: 0.0, bulk: *v, total: *v,
                                   dissipation: 0.0, law_residual: 0.0, monotone: true });
            }
            let e = tail_median_energy(&l).unwrap();
            let k = vals.len().div_ceil(10);
            let tail = &vals[vals.len() - k..];
            prop_assert!(e >= tail.iter().cloned().fold(f64::INFINITY, f64::min));
            prop_assert!(e <= tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        }
    }
}
