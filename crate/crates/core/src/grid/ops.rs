//! Discrete differential operators.
//!
//! Every operator here is assembled so that its adjoint pairs exactly under
//! the cell-volume weighted inner products:
//!
//! * `divergence = −gradientᵗ` (Neumann scalars against no-slip vectors, or
//!   periodic against periodic),
//! * `laplacian = divergence ∘ gradient`,
//! * `velocity_laplacian = −Gᵗ G` with `G` the face/edge velocity gradient,
//! * `advect` and `advect_adjoint`, `cell_velocity_gradient` and its adjoint,
//!   are transposes of each other.

use crate::par;
use crate::tensor::Mat3;

use super::field::ensure_same;
use super::{Grid, GridError, Layout, ScalarField, TensorField, VectorField};

/// Neighbour of `c` one step along `axis` (`+1` or `-1`), honouring wrap-around.
#[inline]
fn step(grid: &Grid, c: [usize; 3], axis: usize, up: bool) -> Option<[usize; 3]> {
    let n = grid.dims()[axis];
    let mut d = c;
    if up {
        if c[axis] + 1 < n {
            d[axis] += 1;
        } else if grid.periodic() {
            d[axis] = 0;
        } else {
            return None;
        }
    } else if c[axis] > 0 {
        d[axis] -= 1;
    } else if grid.periodic() {
        d[axis] = n - 1;
    } else {
        return None;
    }
    Some(d)
}

/// Face-normal differences of a cell scalar. Wall faces carry zero (mirror ghost).
pub fn gradient(phi: &ScalarField) -> VectorField {
    let grid = phi.grid;
    let cells = grid.cells();
    let inv_h = 1.0 / grid.h();
    let mut out = VectorField::zeros(grid);
    for (a, comp) in out.comps.iter_mut().enumerate() {
        let faces = grid.faces(a);
        par::fill(comp, |i| {
            let c = faces.coords(i);
            match grid.face_neighbors(a, c[a]) {
                (Some(lo), Some(hi)) => {
                    let mut l = c;
                    l[a] = lo;
                    let mut r = c;
                    r[a] = hi;
                    (phi.data[cells.index(r)] - phi.data[cells.index(l)]) * inv_h
                }
                _ => 0.0,
            }
        });
    }
    out
}

/// Cell divergence of a face vector.
pub fn divergence(v: &VectorField) -> ScalarField {
    let grid = v.grid;
    let cells = grid.cells();
    let inv_h = 1.0 / grid.h();
    let layouts: Vec<Layout> = (0..grid.ndim()).map(|a| grid.faces(a)).collect();
    let data = par::collect(cells.len(), |i| {
        let c = cells.coords(i);
        let mut s = 0.0;
        for (a, faces) in layouts.iter().enumerate() {
            let mut lo = c;
            let mut hi = c;
            hi[a] = grid.high_face(a, c[a]);
            lo[a] = c[a];
            s += v.comps[a][faces.index(hi)] - v.comps[a][faces.index(lo)];
        }
        s * inv_h
    });
    ScalarField { grid, data }
}

fn laplacian_plane(grid: &Grid, data: &[f64]) -> Vec<f64> {
    let cells = grid.cells();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    par::collect(cells.len(), |i| {
        let c = cells.coords(i);
        let v = data[i];
        let mut s = 0.0;
        for a in 0..grid.ndim() {
            if let Some(n) = step(grid, c, a, true) {
                s += data[cells.index(n)] - v;
            }
            if let Some(n) = step(grid, c, a, false) {
                s += data[cells.index(n)] - v;
            }
        }
        s * inv_h2
    })
}

/// Five-point (2D) / seven-point (3D) Laplacian with mirror or periodic ghosts.
pub fn laplacian(phi: &ScalarField) -> ScalarField {
    ScalarField {
        grid: phi.grid,
        data: laplacian_plane(&phi.grid, &phi.data),
    }
}

/// Componentwise Laplacian of a tensor field.
pub fn tensor_laplacian(q: &TensorField) -> TensorField {
    let comps = q
        .comps
        .iter()
        .map(|c| laplacian_plane(&q.grid, c))
        .collect();
    TensorField {
        grid: q.grid,
        comps,
    }
}

fn advect_plane(u: &VectorField, phi: &[f64]) -> Vec<f64> {
    let grid = u.grid;
    let cells = grid.cells();
    let inv_h = 1.0 / grid.h();
    let layouts: Vec<Layout> = (0..grid.ndim()).map(|a| grid.faces(a)).collect();
    par::collect(cells.len(), |i| {
        let c = cells.coords(i);
        let v = phi[i];
        let mut s = 0.0;
        for (a, faces) in layouts.iter().enumerate() {
            if let Some(n) = step(&grid, c, a, true) {
                let mut f = c;
                f[a] = grid.high_face(a, c[a]);
                s += u.comps[a][faces.index(f)] * 0.5 * (v + phi[cells.index(n)]);
            }
            if let Some(n) = step(&grid, c, a, false) {
                s -= u.comps[a][faces.index(c)] * 0.5 * (v + phi[cells.index(n)]);
            }
        }
        s * inv_h
    })
}

/// `(u·∇)Q` in divergence form `∇·(uQ)` with centred face averages.
///
/// Skew-symmetric: `⟨advect(u, Q), Q⟩ = 0` whenever `divergence(u) = 0`.
pub fn advect(u: &VectorField, q: &TensorField) -> Result<TensorField, GridError> {
    ensure_same(&u.grid, &q.grid)?;
    let comps = q.comps.iter().map(|c| advect_plane(u, c)).collect();
    Ok(TensorField {
        grid: q.grid,
        comps,
    })
}

/// The face vector `F` with `⟨advect(w, Q), H⟩ = ⟨w, F⟩` for every face vector `w`.
pub fn advect_adjoint(q: &TensorField, h: &TensorField) -> Result<VectorField, GridError> {
    ensure_same(&q.grid, &h.grid)?;
    let grid = q.grid;
    let cells = grid.cells();
    let inv_h = 1.0 / grid.h();
    let mut out = VectorField::zeros(grid);
    for (a, comp) in out.comps.iter_mut().enumerate() {
        let faces = grid.faces(a);
        par::fill(comp, |i| {
            let c = faces.coords(i);
            let (Some(lo), Some(hi)) = grid.face_neighbors(a, c[a]) else {
                return 0.0;
            };
            let mut l = c;
            l[a] = lo;
            let mut r = c;
            r[a] = hi;
            let (l, r) = (cells.index(l), cells.index(r));
            let mut s = 0.0;
            for k in 0..9 {
                s += 0.5 * (q.comps[k][l] + q.comps[k][r]) * (h.comps[k][l] - h.comps[k][r]);
            }
            s * inv_h
        });
    }
    Ok(out)
}

/// Discrete velocity gradient: `diag[a]` holds `∂ₐuₐ` at cells, `off[a][b]`
/// holds `∂_b u_a` on the edges between `a`- and `b`-faces.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityGradientField {
    pub grid: Grid,
    pub diag: Vec<Vec<f64>>,
    pub off: Vec<Vec<Vec<f64>>>,
}

impl VelocityGradientField {
    pub fn zeros(grid: Grid) -> Self {
        let nd = grid.ndim();
        let diag = vec![vec![0.0; grid.num_cells()]; nd];
        let off = (0..nd)
            .map(|a| {
                (0..nd)
                    .map(|b| {
                        if a == b {
                            Vec::new()
                        } else {
                            vec![0.0; grid.edges(a, b).len()]
                        }
                    })
                    .collect()
            })
            .collect();
        VelocityGradientField { grid, diag, off }
    }

    /// Applies the discrete gradient to a face vector.
    pub fn of(u: &VectorField) -> Self {
        let grid = u.grid;
        let nd = grid.ndim();
        let inv_h = 1.0 / grid.h();
        let cells = grid.cells();
        let mut g = Self::zeros(grid);
        for a in 0..nd {
            let faces = grid.faces(a);
            par::fill(&mut g.diag[a], |i| {
                let c = cells.coords(i);
                let mut hi = c;
                hi[a] = grid.high_face(a, c[a]);
                (u.comps[a][faces.index(hi)] - u.comps[a][faces.index(c)]) * inv_h
            });
            for b in 0..nd {
                if a == b {
                    continue;
                }
                let edges = grid.edges(a, b);
                par::fill(&mut g.off[a][b], |i| {
                    let e = edges.coords(i);
                    let at = |cb: usize| {
                        let mut f = e;
                        f[b] = cb;
                        u.comps[a][faces.index(f)]
                    };
                    match grid.face_neighbors(b, e[b]) {
                        (Some(lo), Some(hi)) => (at(hi) - at(lo)) * inv_h,
                        (None, Some(hi)) => 2.0 * at(hi) * inv_h,
                        (Some(lo), None) => -2.0 * at(lo) * inv_h,
                        (None, None) => 0.0,
                    }
                });
            }
        }
        g
    }

    /// Quadrature weight (relative to a cell volume) of edge `e` in the `(a, b)` family:
    /// edges lying on a wall count half per wall they sit on.
    fn edge_weight(grid: &Grid, a: usize, b: usize, e: [usize; 3]) -> f64 {
        let mut w = 1.0;
        if grid.is_wall_face(a, e[a]) {
            w *= 0.5;
        }
        if grid.is_wall_face(b, e[b]) {
            w *= 0.5;
        }
        w
    }

    fn weighted(&self) -> Self {
        let grid = self.grid;
        let mut out = self.clone();
        for a in 0..grid.ndim() {
            for b in 0..grid.ndim() {
                if a == b {
                    continue;
                }
                let edges = grid.edges(a, b);
                par::for_each_mut(&mut out.off[a][b], |i, x| {
                    *x *= Self::edge_weight(&grid, a, b, edges.coords(i))
                });
            }
        }
        out
    }

    /// Weighted inner product; the dissipation norm `‖∇u‖²` is `inner(G u, G u)`.
    pub fn inner(&self, other: &Self) -> f64 {
        let w = self.grid.cell_volume();
        let other = other.weighted();
        let mut s = 0.0;
        for (x, y) in self.diag.iter().zip(&other.diag) {
            s += par::sum(x.len(), |i| x[i] * y[i]);
        }
        for (ra, rb) in self.off.iter().zip(&other.off) {
            for (x, y) in ra.iter().zip(rb) {
                s += par::sum(x.len(), |i| x[i] * y[i]);
            }
        }
        w * s
    }

    /// Adjoint of [`VelocityGradientField::of`] under the weighted inner product.
    pub fn adjoint(&self) -> VectorField {
        self.weighted().transpose()
    }

    /// Plain transpose of [`VelocityGradientField::of`]; wall faces receive zero.
    fn transpose(&self) -> VectorField {
        let grid = self.grid;
        let nd = grid.ndim();
        let inv_h = 1.0 / grid.h();
        let cells = grid.cells();
        let mut out = VectorField::zeros(grid);
        for (a, comp) in out.comps.iter_mut().enumerate() {
            let faces = grid.faces(a);
            par::fill(comp, |i| {
                let c = faces.coords(i);
                if grid.is_wall_face(a, c[a]) {
                    return 0.0;
                }
                let mut s = 0.0;
                let (lo, hi) = grid.face_neighbors(a, c[a]);
                if let Some(lo) = lo {
                    let mut k = c;
                    k[a] = lo;
                    s += self.diag[a][cells.index(k)];
                }
                if let Some(hi) = hi {
                    let mut k = c;
                    k[a] = hi;
                    s -= self.diag[a][cells.index(k)];
                }
                for b in 0..nd {
                    if a == b {
                        continue;
                    }
                    let edges = grid.edges(a, b);
                    let off = &self.off[a][b];
                    let cb = c[b];
                    // Edge below (shares face index cb along b): this face is its high side.
                    let coef_lo = if grid.face_neighbors(b, cb).0.is_none() {
                        2.0
                    } else {
                        1.0
                    };
                    s += coef_lo * off[edges.index(c)];
                    // Edge above: this face is its low side.
                    let fb = grid.high_face(b, cb);
                    let coef_hi = if grid.face_neighbors(b, fb).1.is_none() {
                        2.0
                    } else {
                        1.0
                    };
                    let mut e = c;
                    e[b] = fb;
                    s -= coef_hi * off[edges.index(e)];
                }
                s * inv_h
            });
        }
        out
    }
}

/// `ν`-free viscous operator `−Gᵗ G u`; the ghost-cell Laplacian on the MAC grid.
pub fn velocity_laplacian(u: &VectorField) -> VectorField {
    VelocityGradientField::of(u).adjoint().scale(-1.0)
}

/// `‖∇u‖²` with the same gradient the viscous operator is built from.
pub fn velocity_gradient_norm_sq(u: &VectorField) -> f64 {
    let g = VelocityGradientField::of(u);
    g.inner(&g)
}

/// Cell-centred `∇u` (`G[i][j] = ∂ⱼuᵢ`): diagonal entries from the cell's own
/// faces, off-diagonal entries averaged from the four surrounding edges.
pub fn cell_velocity_gradient(u: &VectorField) -> Vec<Mat3> {
    let g = VelocityGradientField::of(u);
    cell_average(&g)
}

fn cell_average(g: &VelocityGradientField) -> Vec<Mat3> {
    let grid = g.grid;
    let nd = grid.ndim();
    let cells = grid.cells();
    par::collect(cells.len(), |i| {
        let c = cells.coords(i);
        let mut m = Mat3::zeros();
        for a in 0..nd {
            m[(a, a)] = g.diag[a][i];
            for b in 0..nd {
                if a == b {
                    continue;
                }
                let edges = grid.edges(a, b);
                let mut s = 0.0;
                for fa in [c[a], grid.high_face(a, c[a])] {
                    for fb in [c[b], grid.high_face(b, c[b])] {
                        let mut e = c;
                        e[a] = fa;
                        e[b] = fb;
                        s += g.off[a][b][edges.index(e)];
                    }
                }
                m[(a, b)] = 0.25 * s;
            }
        }
        m
    })
}

/// Transpose of [`cell_velocity_gradient`]: the face vector `F` with
/// `Σ_cells T : ∇u · vol = ⟨F, u⟩` for every face vector `u`.
pub fn cell_velocity_gradient_adjoint(grid: Grid, t: &[Mat3]) -> VectorField {
    let nd = grid.ndim();
    let cells = grid.cells();
    let mut g = VelocityGradientField::zeros(grid);
    for a in 0..nd {
        par::fill(&mut g.diag[a], |i| t[i][(a, a)]);
        for b in 0..nd {
            if a == b {
                continue;
            }
            let edges = grid.edges(a, b);
            par::fill(&mut g.off[a][b], |i| {
                let e = edges.coords(i);
                let (la, ha) = grid.face_neighbors(a, e[a]);
                let (lb, hb) = grid.face_neighbors(b, e[b]);
                let mut s = 0.0;
                for ca in [la, ha].into_iter().flatten() {
                    for cb in [lb, hb].into_iter().flatten() {
                        let mut k = e;
                        k[a] = ca;
                        k[b] = cb;
                        s += t[cells.index(k)][(a, b)];
                    }
                }
                0.25 * s
            });
        }
    }
    g.transpose()
}

/// Skew-symmetric convective term `(u·∇)u` on the MAC grid.
///
/// Each component is transported by face-averaged fluxes whose divergence over
/// the staggered control volume is the mean of the two adjacent cell
/// divergences, so `⟨velocity_advection(u), u⟩ = 0` for discretely
/// divergence-free `u`.
pub fn velocity_advection(u: &VectorField) -> VectorField {
    let grid = u.grid;
    let nd = grid.ndim();
    let inv_h = 1.0 / grid.h();
    let layouts: Vec<Layout> = (0..nd).map(|a| grid.faces(a)).collect();
    let mut out = VectorField::zeros(grid);
    for (a, comp) in out.comps.iter_mut().enumerate() {
        let fa_layout = layouts[a];
        let phi = &u.comps[a];
        par::fill(comp, |i| {
            let c = fa_layout.coords(i);
            if grid.is_wall_face(a, c[a]) {
                return 0.0;
            }
            let (Some(lo_a), Some(hi_a)) = grid.face_neighbors(a, c[a]) else {
                return 0.0;
            };
            let here = phi[i];
            let mut s = 0.0;
            // Along a: control-volume faces sit at the cells on either side.
            {
                let mut next = c;
                next[a] = grid.high_face(a, hi_a);
                let mut prev = c;
                prev[a] = lo_a;
                let pn = phi[fa_layout.index(next)];
                let pp = phi[fa_layout.index(prev)];
                let u_hi = 0.5 * (here + pn);
                let u_lo = 0.5 * (pp + here);
                s += u_hi * 0.5 * (here + pn) - u_lo * 0.5 * (pp + here);
            }
            for b in 0..nd {
                if b == a {
                    continue;
                }
                let fb_layout = layouts[b];
                let flux = |fb: usize| {
                    let mut l = c;
                    l[a] = lo_a;
                    l[b] = fb;
                    let mut r = c;
                    r[a] = hi_a;
                    r[b] = fb;
                    0.5 * (u.comps[b][fb_layout.index(l)] + u.comps[b][fb_layout.index(r)])
                };
                if let Some(n) = step(&grid, c, b, true) {
                    let v = flux(grid.high_face(b, c[b]));
                    s += v * 0.5 * (here + phi[fa_layout.index(n)]);
                }
                if let Some(n) = step(&grid, c, b, false) {
                    let v = flux(c[b]);
                    s -= v * 0.5 * (here + phi[fa_layout.index(n)]);
                }
            }
            s * inv_h
        });
    }
    out
}
