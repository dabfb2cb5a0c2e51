use crate::par;
use crate::tensor::{Mat3, QTensor};

use super::{Grid, GridError};

/// Cell-centred scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub data: Vec<f64>,
}

/// Cell-centred 3×3 tensor stored as nine component planes (row-major `3*i + j`).
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    pub grid: Grid,
    pub comps: Vec<Vec<f64>>,
}

/// One scalar per face normal to `axis`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    pub grid: Grid,
    pub axis: usize,
    pub data: Vec<f64>,
}

/// Face-centred (MAC) vector: component `a` on the faces normal to axis `a`.
/// A 2D grid carries two in-plane components.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: Grid,
    pub comps: Vec<Vec<f64>>,
}

pub(crate) fn ensure_same(a: &Grid, b: &Grid) -> Result<(), GridError> {
    if a == b {
        Ok(())
    } else {
        Err(GridError::Mismatch)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    par::sum(a.len(), |i| a[i] * b[i])
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        ScalarField {
            data: vec![0.0; grid.num_cells()],
            grid,
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> f64 + Sync + Send) -> Self {
        let cells = grid.cells();
        let data = par::collect(cells.len(), |i| f(grid.cell_center(cells.coords(i))));
        ScalarField { grid, data }
    }

    /// Cell-volume weighted inner product.
    pub fn inner(&self, other: &ScalarField) -> f64 {
        self.grid.cell_volume() * dot(&self.data, &other.data)
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn mean(&self) -> f64 {
        par::sum(self.data.len(), |i| self.data[i]) / self.data.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl TensorField {
    pub fn zeros(grid: Grid) -> Self {
        TensorField {
            comps: vec![vec![0.0; grid.num_cells()]; 9],
            grid,
        }
    }

    pub fn constant(grid: Grid, q: &QTensor) -> Self {
        let mut f = Self::zeros(grid);
        for (c, plane) in f.comps.iter_mut().enumerate() {
            plane.fill(q.0[(c / 3, c % 3)]);
        }
        f
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> QTensor + Sync + Send) -> Self {
        let cells = grid.cells();
        let values = par::collect(cells.len(), |i| f(grid.cell_center(cells.coords(i))));
        Self::from_cells(grid, &values)
    }

    pub fn from_cells(grid: Grid, values: &[QTensor]) -> Self {
        let mut f = Self::zeros(grid);
        for (i, q) in values.iter().enumerate() {
            f.set(i, q);
        }
        f
    }

    #[inline]
    pub fn get(&self, cell: usize) -> QTensor {
        QTensor(Mat3::from_fn(|i, j| self.comps[3 * i + j][cell]))
    }

    #[inline]
    pub fn set(&mut self, cell: usize, q: &QTensor) {
        for i in 0..3 {
            for j in 0..3 {
                self.comps[3 * i + j][cell] = q.0[(i, j)];
            }
        }
    }

    pub fn to_cells(&self) -> Vec<QTensor> {
        par::collect(self.grid.num_cells(), |i| self.get(i))
    }

    /// Applies `f` cell by cell.
    pub fn map(&self, f: impl Fn(usize, &QTensor) -> QTensor + Sync + Send) -> TensorField {
        let vals = par::collect(self.grid.num_cells(), |i| f(i, &self.get(i)));
        Self::from_cells(self.grid, &vals)
    }

    pub fn inner(&self, other: &TensorField) -> f64 {
        let w = self.grid.cell_volume();
        w * self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| dot(a, b))
            .sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &TensorField) -> TensorField {
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + s * y).collect())
            .collect();
        TensorField {
            grid: self.grid,
            comps,
        }
    }

    pub fn scale(&self, s: f64) -> TensorField {
        TensorField {
            grid: self.grid,
            comps: self
                .comps
                .iter()
                .map(|c| c.iter().map(|x| x * s).collect())
                .collect(),
        }
    }

    pub fn max_abs_trace(&self) -> f64 {
        par::max(self.grid.num_cells(), |i| self.get(i).trace().abs())
    }

    pub fn max_asymmetry(&self) -> f64 {
        par::max(self.grid.num_cells(), |i| self.get(i).asymmetry())
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|c| c.iter().all(|x| x.is_finite()))
    }

    /// Projects every cell onto symmetric traceless matrices.
    pub fn project_symmetric_traceless(&self) -> TensorField {
        self.map(|_, q| q.symmetric_traceless())
    }
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        let comps = (0..grid.ndim())
            .map(|a| vec![0.0; grid.faces(a).len()])
            .collect();
        VectorField { grid, comps }
    }

    /// Samples `f` at face centres; wall faces are left at zero.
    pub fn from_fn(grid: Grid, f: impl Fn(usize, [f64; 3]) -> f64 + Sync + Send) -> Self {
        let mut v = Self::zeros(grid);
        for (a, comp) in v.comps.iter_mut().enumerate() {
            let faces = grid.faces(a);
            par::fill(comp, |i| {
                let c = faces.coords(i);
                if grid.is_wall_face(a, c[a]) {
                    return 0.0;
                }
                let mut x = grid.cell_center(c);
                x[a] -= 0.5 * grid.h();
                f(a, x)
            });
        }
        v
    }

    pub fn component(&self, axis: usize) -> FaceField {
        FaceField {
            grid: self.grid,
            axis,
            data: self.comps[axis].clone(),
        }
    }

    pub fn inner(&self, other: &VectorField) -> f64 {
        let w = self.grid.cell_volume();
        w * self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| dot(a, b))
            .sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn axpy(&self, s: f64, other: &VectorField) -> VectorField {
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + s * y).collect())
            .collect();
        VectorField {
            grid: self.grid,
            comps,
        }
    }

    pub fn scale(&self, s: f64) -> VectorField {
        VectorField {
            grid: self.grid,
            comps: self
                .comps
                .iter()
                .map(|c| c.iter().map(|x| x * s).collect())
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|c| c.iter().all(|x| x.is_finite()))
    }

    /// Zeroes every wall face so the field satisfies the no-slip condition.
    pub fn enforce_walls(&mut self) {
        let grid = self.grid;
        for (a, comp) in self.comps.iter_mut().enumerate() {
            let faces = grid.faces(a);
            par::for_each_mut(comp, |i, x| {
                if grid.is_wall_face(a, faces.coords(i)[a]) {
                    *x = 0.0;
                }
            });
        }
    }
}
