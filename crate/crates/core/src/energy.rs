//! Free energy, molecular field and dissipation over discrete fields.
//!
//! The discrete energy uses the same face gradients and cell quadrature as
//! the operators in [`crate::grid`], so that `molecular_field_h` is exactly the
//! L² gradient of `𝓔_μ` on the grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{
    gradient, tensor_laplacian, velocity_gradient_norm_sq, GridError, ScalarField, TensorField,
    VectorField,
};
use crate::par;
use crate::tensor::{bulk_force, potential_f, AlgebraError, BulkForce, QTensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("parameter {name} = {value} out of range ({rule})")]
    InvalidParam {
        name: &'static str,
        value: f64,
        rule: &'static str,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// Material constants of the model and the coercivity shift `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub epsilon: f64,
    pub nu: f64,
    pub gamma: f64,
    pub mu: f64,
}

fn positive(name: &'static str, value: f64) -> Result<(), EnergyError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(EnergyError::InvalidParam {
            name,
            value,
            rule: "must be positive and finite",
        })
    }
}

impl PotentialParams {
    /// Validates the constants and sets `mu` to the certified minimum.
    pub fn new(
        a: f64,
        b: f64,
        c: f64,
        epsilon: f64,
        nu: f64,
        gamma: f64,
    ) -> Result<Self, EnergyError> {
        for (name, v) in [("a", a), ("b", b)] {
            if !v.is_finite() {
                return Err(EnergyError::InvalidParam {
                    name,
                    value: v,
                    rule: "must be finite",
                });
            }
        }
        positive("c", c)?;
        positive("epsilon", epsilon)?;
        positive("nu", nu)?;
        positive("gamma", gamma)?;
        let mu = compute_mu(a, b, c)?;
        Ok(PotentialParams {
            a,
            b,
            c,
            epsilon,
            nu,
            gamma,
            mu,
        })
    }

    /// Replaces `mu` by a larger shift. Smaller values would break the certificate.
    pub fn with_mu(self, mu: f64) -> Result<Self, EnergyError> {
        let min = compute_mu(self.a, self.b, self.c)?;
        if !(mu >= min && mu.is_finite()) {
            return Err(EnergyError::InvalidParam {
                name: "mu",
                value: mu,
                rule: "must be at least the certified shift",
            });
        }
        Ok(PotentialParams { mu, ..self })
    }

    /// `F(Q) + μ`.
    pub fn shifted_potential(&self, q: &QTensor) -> f64 {
        potential_f(q, self) + self.mu
    }
}

/// Smallest `μ ≥ 0` with `F(Q) + μ ≥ (c/8)|Q|⁴` for every `Q`.
///
/// With `|Q²:Q| ≤ |Q|³` the claim reduces to `g(r) + μ ≥ 0` for
/// `g(r) = (a/2)r² − (|b|/3)r³ + (c/8)r⁴`, `r = |Q| ≥ 0`. Besides `r = 0`,
/// the critical points of `g` are the roots of `(c/2)r² − |b| r + a = 0`.
pub fn compute_mu(a: f64, b: f64, c: f64) -> Result<f64, EnergyError> {
    positive("c", c)?;
    let g = |r: f64| 0.5 * a * r * r - b.abs() / 3.0 * r * r * r + 0.125 * c * r.powi(4);
    let disc = b * b - 2.0 * a * c;
    let mut min = 0.0_f64;
    if disc >= 0.0 {
        let sq = disc.sqrt();
        for r in [(b.abs() + sq) / c, (b.abs() - sq) / c] {
            if r > 0.0 {
                min = min.min(g(r));
            }
        }
    }
    Ok((-min).max(0.0))
}

/// Energy terms of a state and the dissipation rate it implies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// `½‖u‖²`
    pub kinetic: f64,
    /// `(ε/2)‖∇Q‖²`
    pub elastic: f64,
    /// `∫ F(Q) + μ`
    pub bulk: f64,
    pub total: f64,
    /// `ν‖∇u‖² + γ‖H‖²`
    pub dissipation: f64,
}

/// `H = −εΔQ + f(Q)` with the grid Laplacian.
///
/// `BulkForce::FPz` requires every cell of `Q` to be symmetric.
pub fn molecular_field_h(
    q: &TensorField,
    params: &PotentialParams,
    bulk: BulkForce,
) -> Result<TensorField, EnergyError> {
    if bulk == BulkForce::FPz {
        let worst = q.max_asymmetry();
        if worst > crate::tensor::SYMMETRY_TOL * (1.0 + max_norm(q)) {
            return Err(AlgebraError::NotSymmetric(worst).into());
        }
    }
    let lap = tensor_laplacian(q);
    let force = q.map(|_, x| bulk_force(x, params, bulk));
    Ok(force.axpy(-params.epsilon, &lap))
}

fn max_norm(q: &TensorField) -> f64 {
    par::max(q.grid.num_cells(), |i| q.get(i).norm())
}

/// `∫ (ε/2)|∇Q|²` with face gradients.
pub fn elastic_energy(q: &TensorField, params: &PotentialParams) -> f64 {
    let g = q.grid;
    let s: f64 = q
        .comps
        .iter()
        .map(|c| {
            gradient(&ScalarField {
                grid: g,
                data: c.clone(),
            })
            .norm()
            .powi(2)
        })
        .sum();
    0.5 * params.epsilon * s
}

/// `∫ F(Q) + μ` by the midpoint rule.
pub fn bulk_energy(q: &TensorField, params: &PotentialParams) -> f64 {
    q.grid.cell_volume() * par::sum(q.grid.num_cells(), |i| params.shifted_potential(&q.get(i)))
}

/// `𝓔_μ(Q)`: elastic plus shifted bulk energy.
pub fn q_energy(q: &TensorField, params: &PotentialParams) -> f64 {
    elastic_energy(q, params) + bulk_energy(q, params)
}

pub fn kinetic_energy(u: &VectorField) -> f64 {
    0.5 * u.inner(u)
}

/// `ν‖∇u‖² + γ‖H‖²`.
pub fn dissipation(
    u: &VectorField,
    h: &TensorField,
    params: &PotentialParams,
) -> Result<f64, EnergyError> {
    crate::grid::field_grids_match(&u.grid, &h.grid)?;
    Ok(params.nu * velocity_gradient_norm_sq(u) + params.gamma * h.inner(h))
}

pub fn total_energy(
    u: &VectorField,
    q: &TensorField,
    params: &PotentialParams,
    bulk: BulkForce,
) -> Result<EnergyBreakdown, EnergyError> {
    crate::grid::field_grids_match(&u.grid, &q.grid)?;
    let h = molecular_field_h(q, params, bulk)?;
    let kinetic = kinetic_energy(u);
    let elastic = elastic_energy(q, params);
    let bulk_e = bulk_energy(q, params);
    Ok(EnergyBreakdown {
        kinetic,
        elastic,
        bulk: bulk_e,
        total: kinetic + elastic + bulk_e,
        dissipation: dissipation(u, &h, params)?,
    })
}
