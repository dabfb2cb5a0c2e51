//! Linear solvers for cell-centred fields.
//!
//! The constant-coefficient operators `α I − β Δ` on a box (mirror ghosts) or a
//! periodic grid are diagonalised by a separable eigenbasis: cosines at cell
//! centres for Neumann axes, real Fourier modes for periodic axes. The direct
//! solve below is linear in its right-hand side, so it maps trace-free and
//! symmetric tensor right-hand sides to trace-free and symmetric solutions up
//! to rounding. A Jacobi-preconditioned conjugate gradient is kept for
//! operators without such a basis and as an independent route for Poisson.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::par;

use super::{laplacian, Grid, GridError, Layout, ScalarField, VectorField};

/// Relative residual target of the Poisson solve.
pub const POISSON_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoissonMethod {
    /// Direct solve in the separable eigenbasis.
    Spectral,
    /// Jacobi-preconditioned conjugate gradient.
    Cg,
}

/// Boundary treatment of one axis of a separable operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AxisKind {
    /// Cell values, mirror ghosts (zero normal derivative).
    Neumann,
    /// Values on a wrapped axis.
    Periodic,
    /// Face values with the two end slots pinned to zero (walls).
    DirichletFaces,
    /// Cell values with odd ghosts (zero at the wall midway to the ghost).
    DirichletCells,
}

/// Orthonormal eigenbasis of the 1D second-difference operator on one axis.
#[derive(Debug, Clone)]
struct AxisBasis {
    /// Storage length along the axis.
    len: usize,
    /// `vectors[k * len + i]`: mode `k` at slot `i`.
    vectors: Vec<f64>,
    /// `transposed[i * len + k] = vectors[k * len + i]`.
    transposed: Vec<f64>,
    /// Eigenvalues of `−Δ_1D`, in units of 1/length². Pinned wall slots carry 0.
    eigenvalues: Vec<f64>,
}

impl AxisBasis {
    /// `n` is the cell count of the axis.
    fn new(n: usize, h: f64, kind: AxisKind) -> Self {
        let len = if kind == AxisKind::DirichletFaces {
            n + 1
        } else {
            n
        };
        let mut vectors = vec![0.0; len * len];
        let mut eigenvalues = vec![0.0; len];
        let nf = n as f64;
        let lam = |freq: f64| 2.0 * (1.0 - (PI * freq / nf).cos()) / (h * h);
        let c0 = (1.0 / nf).sqrt();
        let c1 = (2.0 / nf).sqrt();
        match kind {
            AxisKind::Neumann => {
                for k in 0..n {
                    let c = if k == 0 { c0 } else { c1 };
                    for i in 0..n {
                        vectors[k * n + i] = c * (PI * k as f64 * (i as f64 + 0.5) / nf).cos();
                    }
                    eigenvalues[k] = lam(k as f64);
                }
            }
            AxisKind::DirichletCells => {
                for k in 1..=n {
                    let c = if k == n { c0 } else { c1 };
                    for i in 0..n {
                        vectors[(k - 1) * n + i] =
                            c * (PI * k as f64 * (i as f64 + 0.5) / nf).sin();
                    }
                    eigenvalues[k - 1] = lam(k as f64);
                }
            }
            AxisKind::DirichletFaces => {
                // Rows 0 and n are the wall slots; rows 1..n are interior sine modes.
                vectors[0] = 1.0;
                vectors[n * len + n] = 1.0;
                for k in 1..n {
                    for j in 1..n {
                        vectors[k * len + j] = c1 * (PI * (k * j) as f64 / nf).sin();
                    }
                    eigenvalues[k] = lam(k as f64);
                }
            }
            AxisKind::Periodic => {
                // Mode order: 1, cos 1, sin 1, cos 2, sin 2, ..., Nyquist (even n).
                let mut k = 0;
                let mut push = |freq: usize, f: &dyn Fn(usize) -> f64, k: &mut usize| {
                    for i in 0..n {
                        vectors[*k * n + i] = f(i);
                    }
                    eigenvalues[*k] = lam(2.0 * freq as f64);
                    *k += 1;
                };
                push(0, &|_| c0, &mut k);
                for m in 1..n.div_ceil(2) {
                    let w = 2.0 * PI * m as f64 / nf;
                    push(m, &|i| c1 * (w * i as f64).cos(), &mut k);
                    push(m, &|i| c1 * (w * i as f64).sin(), &mut k);
                }
                if n.is_multiple_of(2) {
                    push(n / 2, &|i| if i % 2 == 0 { c0 } else { -c0 }, &mut k);
                }
                debug_assert_eq!(k, n);
            }
        }
        let mut transposed = vec![0.0; len * len];
        for k in 0..len {
            for i in 0..len {
                transposed[i * len + k] = vectors[k * len + i];
            }
        }
        AxisBasis {
            len,
            vectors,
            transposed,
            eigenvalues,
        }
    }
}

/// `(α I − β Δ) x = r` for an operator diagonalised axis by axis.
#[derive(Debug, Clone)]
struct SeparableSolver {
    layout: Layout,
    bases: Vec<AxisBasis>,
    alpha: f64,
    beta: f64,
}

impl SeparableSolver {
    fn new(grid: &Grid, kinds: &[AxisKind], alpha: f64, beta: f64) -> Self {
        let bases: Vec<AxisBasis> = kinds
            .iter()
            .enumerate()
            .map(|(a, k)| AxisBasis::new(grid.dims()[a], grid.h(), *k))
            .collect();
        let mut dims = [1; 3];
        for (a, b) in bases.iter().enumerate() {
            dims[a] = b.len;
        }
        SeparableSolver {
            layout: Layout::new(dims),
            bases,
            alpha,
            beta,
        }
    }

    /// Applies the basis (`inverse`) or its transpose along one axis.
    ///
    /// The data is viewed as `[outer][n][inner]`; each output row
    /// `(outer, k)` is a contiguous combination of the `n` input rows.
    fn transform_axis(&self, data: &[f64], axis: usize, inverse: bool) -> Vec<f64> {
        let basis = &self.bases[axis];
        let n = basis.len;
        let inner = self.layout.stride(axis);
        let m = if inverse {
            &basis.transposed
        } else {
            &basis.vectors
        };
        let mut out = vec![0.0; data.len()];
        if inner == 1 {
            par::for_each_chunk_mut(&mut out, n, |o, dst| {
                let src = &data[o * n..(o + 1) * n];
                for (k, d) in dst.iter_mut().enumerate() {
                    *d = m[k * n..(k + 1) * n]
                        .iter()
                        .zip(src)
                        .map(|(w, s)| w * s)
                        .sum();
                }
            });
            return out;
        }
        par::for_each_chunk_mut(&mut out, inner, |row, dst| {
            let (o, k) = (row / n, row % n);
            let block = &data[o * n * inner..(o + 1) * n * inner];
            for (j, w) in m[k * n..(k + 1) * n].iter().enumerate() {
                let src = &block[j * inner..(j + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        });
        out
    }

    fn symbol(&self, idx: usize) -> f64 {
        let c = self.layout.coords(idx);
        let lam: f64 = self
            .bases
            .iter()
            .enumerate()
            .map(|(a, b)| b.eigenvalues[c[a]])
            .sum();
        self.alpha + self.beta * lam
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut hat = rhs.to_vec();
        for a in 0..self.bases.len() {
            hat = self.transform_axis(&hat, a, false);
        }
        par::for_each_mut(&mut hat, |i, x| {
            let s = self.symbol(i);
            *x = if s.abs() > 1e-300 { *x / s } else { 0.0 };
        });
        for a in 0..self.bases.len() {
            hat = self.transform_axis(&hat, a, true);
        }
        hat
    }
}

/// Direct solver for `(α I − β Δ) φ = r` on cell-centred scalars.
#[derive(Debug, Clone)]
pub struct HelmholtzSolver {
    grid: Grid,
    inner: SeparableSolver,
}

impl HelmholtzSolver {
    pub fn new(grid: Grid, alpha: f64, beta: f64) -> Self {
        let kind = if grid.periodic() {
            AxisKind::Periodic
        } else {
            AxisKind::Neumann
        };
        HelmholtzSolver {
            grid,
            inner: SeparableSolver::new(&grid, &vec![kind; grid.ndim()], alpha, beta),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Solves one plane. A vanishing symbol (the constant mode of a pure
    /// Laplacian) maps to zero.
    pub fn solve_plane(&self, rhs: &[f64]) -> Vec<f64> {
        self.inner.solve(rhs)
    }

    pub fn solve(&self, rhs: &ScalarField) -> ScalarField {
        ScalarField {
            grid: rhs.grid,
            data: self.solve_plane(&rhs.data),
        }
    }
}

/// Direct solver for `(α I − β Δ) u = r` with the MAC viscous operator
/// [`velocity_laplacian`](super::velocity_laplacian) (no-slip walls or periodic).
/// Wall faces of the result equal the wall entries of `r` divided by `α`.
#[derive(Debug, Clone)]
pub struct VelocityHelmholtz {
    grid: Grid,
    comps: Vec<SeparableSolver>,
}

impl VelocityHelmholtz {
    pub fn new(grid: Grid, alpha: f64, beta: f64) -> Self {
        let nd = grid.ndim();
        let comps = (0..nd)
            .map(|a| {
                let kinds: Vec<AxisKind> = (0..nd)
                    .map(|b| match (grid.periodic(), a == b) {
                        (true, _) => AxisKind::Periodic,
                        (false, true) => AxisKind::DirichletFaces,
                        (false, false) => AxisKind::DirichletCells,
                    })
                    .collect();
                SeparableSolver::new(&grid, &kinds, alpha, beta)
            })
            .collect();
        VelocityHelmholtz { grid, comps }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn solve(&self, rhs: &VectorField) -> VectorField {
        let comps = self
            .comps
            .iter()
            .zip(&rhs.comps)
            .map(|(s, r)| s.solve(r))
            .collect();
        VectorField {
            grid: rhs.grid,
            comps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    par::sum(a.len(), |i| a[i] * b[i])
}

/// Preconditioned conjugate gradient for an SPD operator given as a closure.
///
/// Restriction applied inside [`conjugate_gradient`].
pub type Projector<'a> = &'a dyn Fn(&mut [f64]);

/// `project`, when given, is applied to every residual and search direction
/// (used to stay in the zero-mean subspace of singular Neumann problems).
pub fn conjugate_gradient(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
    project: Option<Projector<'_>>,
) -> Result<CgOutcome, GridError> {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome {
            iterations: 0,
            residual: 0.0,
        });
    }
    let ax = apply(x);
    let mut r: Vec<f64> = (0..n).map(|i| b[i] - ax[i]).collect();
    if let Some(p) = project {
        p(&mut r);
    }
    let mut z: Vec<f64> = (0..n).map(|i| r[i] / diag[i]).collect();
    if let Some(p) = project {
        p(&mut z);
    }
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut res = dot(&r, &r).sqrt() / bnorm;
    let mut it = 0;
    while res > tol {
        if it >= max_iter {
            return Err(GridError::NotConverged {
                iterations: it,
                residual: res,
            });
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(GridError::NotConverged {
                iterations: it,
                residual: res,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if let Some(pr) = project {
            pr(&mut r);
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        if let Some(pr) = project {
            pr(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = dot(&r, &r).sqrt() / bnorm;
        it += 1;
    }
    Ok(CgOutcome {
        iterations: it,
        residual: res,
    })
}

fn remove_mean(v: &mut [f64]) {
    let m = par::sum(v.len(), |i| v[i]) / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Solves `laplacian(φ) = rhs` with the grid's boundary treatment.
///
/// Both supported boundary kinds make the Laplacian singular on constants, so
/// `rhs` must have zero mean (relative to its RMS, within `1e-10`) and the
/// returned `φ` is normalised to zero mean.
pub fn poisson_solve(rhs: &ScalarField, method: PoissonMethod) -> Result<ScalarField, GridError> {
    let grid = rhs.grid;
    let n = rhs.data.len();
    let mean = rhs.mean();
    let rms = (par::sum(n, |i| rhs.data[i] * rhs.data[i]) / n as f64).sqrt();
    if rms > 0.0 && mean.abs() > POISSON_TOL * rms {
        return Err(GridError::IncompatibleRhs {
            mean,
            relative: mean.abs() / rms,
        });
    }
    let mut b = rhs.data.clone();
    remove_mean(&mut b);
    let mut phi = match method {
        PoissonMethod::Spectral => HelmholtzSolver::new(grid, 0.0, -1.0).solve_plane(&b),
        PoissonMethod::Cg => {
            // Solve (−Δ) φ = −rhs, SPD on zero-mean fields.
            let neg: Vec<f64> = b.iter().map(|x| -x).collect();
            let diag = vec![2.0 * grid.ndim() as f64 / (grid.h() * grid.h()); n];
            let mut x = vec![0.0; n];
            let apply = |v: &[f64]| {
                laplacian(&ScalarField {
                    grid,
                    data: v.to_vec(),
                })
                .data
                .into_iter()
                .map(|y| -y)
                .collect::<Vec<_>>()
            };
            conjugate_gradient(
                apply,
                &diag,
                &neg,
                &mut x,
                POISSON_TOL * 0.1,
                10 * n,
                Some(&remove_mean),
            )?;
            x
        }
    };
    remove_mean(&mut phi);
    Ok(ScalarField { grid, data: phi })
}
