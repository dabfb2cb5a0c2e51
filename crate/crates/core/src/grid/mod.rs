//! Structured box grids, staggered fields, and summation-by-parts operators.
//!
//! Scalars and the order parameter live at cell centres. Velocity is stored on
//! a MAC layout: component `a` lives on the faces normal to axis `a`. With
//! `Boundary::Box` the walls carry no-slip velocity and homogeneous Neumann
//! data for cell-centred fields (mirror ghosts); with `Boundary::Periodic`
//! every axis wraps.

mod field;
pub mod io;
mod ops;
mod solve;

pub(crate) use field::ensure_same as field_grids_match;
pub use field::{FaceField, ScalarField, TensorField, VectorField};
pub use ops::{
    advect, advect_adjoint, cell_velocity_gradient, cell_velocity_gradient_adjoint, divergence,
    gradient, laplacian, tensor_laplacian, velocity_advection, velocity_gradient_norm_sq,
    velocity_laplacian, VelocityGradientField,
};
pub use solve::{
    conjugate_gradient, poisson_solve, CgOutcome, HelmholtzSolver, PoissonMethod, Projector,
    VelocityHelmholtz,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid needs 2 or 3 axes with at least 4 cells each, got {0:?}")]
    TooSmall(Vec<usize>),
    #[error("grid spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("fields live on different grids")]
    Mismatch,
    #[error("right-hand side has nonzero mean {mean:e} (relative {relative:e}) under a pure Neumann/periodic problem")]
    IncompatibleRhs { mean: f64, relative: f64 },
    #[error(
        "linear solve did not converge in {iterations} iterations (relative residual {residual:e})"
    )]
    NotConverged { iterations: usize, residual: f64 },
    #[error("malformed field file: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for GridError {
    fn from(e: std::io::Error) -> Self {
        GridError::Io(e.to_string())
    }
}

/// Boundary treatment shared by every axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Wrap on every axis.
    Periodic,
    /// Walls: no-slip velocity, zero normal derivative for cell fields.
    Box,
}

/// Cell counts, spacing and boundary kind. 2D grids carry `dims[2] == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dims: [usize; 3],
    ndim: usize,
    h: f64,
    bc: Boundary,
}

impl Grid {
    pub fn new(dims: &[usize], h: f64, bc: Boundary) -> Result<Self, GridError> {
        if !(dims.len() == 2 || dims.len() == 3) || dims.iter().any(|&n| n < 4) {
            return Err(GridError::TooSmall(dims.to_vec()));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(GridError::BadSpacing(h));
        }
        let mut d = [1; 3];
        d[..dims.len()].copy_from_slice(dims);
        Ok(Grid {
            dims: d,
            ndim: dims.len(),
            h,
            bc,
        })
    }

    pub fn new_2d(nx: usize, ny: usize, h: f64, bc: Boundary) -> Result<Self, GridError> {
        Self::new(&[nx, ny], h, bc)
    }

    pub fn ndim(&self) -> usize {
        self.ndim
    }

    /// Cells per axis (trailing 1 for 2D grids).
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn bc(&self) -> Boundary {
        self.bc
    }

    pub fn periodic(&self) -> bool {
        self.bc == Boundary::Periodic
    }

    pub fn num_cells(&self) -> usize {
        self.dims.iter().product()
    }

    /// Volume of one cell, the quadrature weight of every discrete norm.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.ndim as i32)
    }

    pub fn domain_volume(&self) -> f64 {
        self.cell_volume() * self.num_cells() as f64
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.h * self.dims[axis] as f64
    }

    pub fn cells(&self) -> Layout {
        Layout::new(self.dims)
    }

    /// Storage along `axis` for the faces normal to it.
    pub fn face_count(&self, axis: usize) -> usize {
        match self.bc {
            Boundary::Periodic => self.dims[axis],
            Boundary::Box => self.dims[axis] + 1,
        }
    }

    pub fn faces(&self, axis: usize) -> Layout {
        let mut d = self.dims;
        d[axis] = self.face_count(axis);
        Layout::new(d)
    }

    /// Edges normal to the plane spanned by `a` and `b`.
    pub fn edges(&self, a: usize, b: usize) -> Layout {
        let mut d = self.dims;
        d[a] = self.face_count(a);
        d[b] = self.face_count(b);
        Layout::new(d)
    }

    /// Whether face `f` along `axis` is a wall (always false when periodic).
    pub fn is_wall_face(&self, axis: usize, f: usize) -> bool {
        self.bc == Boundary::Box && (f == 0 || f == self.dims[axis])
    }

    /// Cell centre coordinates, origin at the lower domain corner.
    pub fn cell_center(&self, idx: [usize; 3]) -> [f64; 3] {
        let mut x = [0.0; 3];
        for a in 0..self.ndim {
            x[a] = (idx[a] as f64 + 0.5) * self.h;
        }
        x
    }

    /// Cells on the low (`f - 1`) and high (`f`) side of face `f`.
    pub(crate) fn face_neighbors(&self, axis: usize, f: usize) -> (Option<usize>, Option<usize>) {
        let n = self.dims[axis];
        match self.bc {
            Boundary::Periodic => (Some((f + n - 1) % n), Some(f % n)),
            Boundary::Box => (f.checked_sub(1), if f < n { Some(f) } else { None }),
        }
    }

    /// The face between cell `c` and `c + 1` along `axis` (the high face of `c`).
    pub(crate) fn high_face(&self, axis: usize, c: usize) -> usize {
        match self.bc {
            Boundary::Periodic => (c + 1) % self.dims[axis],
            Boundary::Box => c + 1,
        }
    }
}

/// Row-major index map for a 3-index block (last index fastest).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub dims: [usize; 3],
    strides: [usize; 3],
}

impl Layout {
    pub fn new(dims: [usize; 3]) -> Self {
        Layout {
            dims,
            strides: [dims[1] * dims[2], dims[2], 1],
        }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: [usize; 3]) -> usize {
        i[0] * self.strides[0] + i[1] * self.strides[1] + i[2]
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        [
            idx / self.strides[0],
            (idx / self.strides[1]) % self.dims[1],
            idx % self.dims[2],
        ]
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_grids() {
        assert!(matches!(
            Grid::new(&[3, 8], 0.1, Boundary::Box),
            Err(GridError::TooSmall(_))
        ));
        assert!(matches!(
            Grid::new(&[8], 0.1, Boundary::Box),
            Err(GridError::TooSmall(_))
        ));
        assert!(matches!(
            Grid::new(&[8, 8], 0.0, Boundary::Box),
            Err(GridError::BadSpacing(_))
        ));
    }

    #[test]
    fn layout_roundtrip() {
        let l = Layout::new([5, 4, 3]);
        for idx in 0..l.len() {
            assert_eq!(l.index(l.coords(idx)), idx);
        }
    }

    #[test]
    fn face_counts() {
        let g = Grid::new_2d(6, 5, 0.1, Boundary::Box).unwrap();
        assert_eq!(g.faces(0).dims, [7, 5, 1]);
        assert_eq!(g.edges(0, 1).dims, [7, 6, 1]);
        assert_eq!(g.face_neighbors(0, 0), (None, Some(0)));
        assert_eq!(g.face_neighbors(0, 6), (Some(5), None));
        let p = Grid::new_2d(6, 5, 0.1, Boundary::Periodic).unwrap();
        assert_eq!(p.faces(1).dims, [6, 5, 1]);
        assert_eq!(p.face_neighbors(1, 0), (Some(4), Some(0)));
    }
}
