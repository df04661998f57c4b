//! Rectangular cell-centered grids in one to three dimensions and the scalar
//! fields living on them.

mod eigen;
mod io;
pub(crate) mod linsolve;
mod ops;
mod spectral;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub use eigen::{neumann_eigenbasis, NeumannEigenbasis};
pub use io::{read_snapshot, write_csv, write_snapshot, SNAPSHOT_MAGIC};
pub use linsolve::{
    dual_norm, harmonic_extension, inverse_dirichlet, inverse_neumann, CG_RTOL,
};
pub use spectral::SpectralOps;

/// A point in the domain; unused trailing coordinates are zero.
pub type Point = [f64; 3];

/// Space-time callable `(x, t) ↦ value`.
pub type SpaceTimeFn = Arc<dyn Fn(&Point, f64) -> f64 + Send + Sync>;

/// Which homogeneous operator a quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    Neumann,
    Dirichlet,
}

/// Boundary condition imposed on the chemical potential.
#[derive(Clone)]
pub enum MuBoundaryCondition {
    NeumannZeroFlux,
    /// Prescribed trace `μ_Γ(x, t)` evaluated at boundary face centers.
    Dirichlet(SpaceTimeFn),
}

impl MuBoundaryCondition {
    pub fn kind(&self) -> BoundaryKind {
        match self {
            MuBoundaryCondition::NeumannZeroFlux => BoundaryKind::Neumann,
            MuBoundaryCondition::Dirichlet(_) => BoundaryKind::Dirichlet,
        }
    }

    pub fn homogeneous_dirichlet() -> Self {
        MuBoundaryCondition::Dirichlet(Arc::new(|_, _| 0.0))
    }
}

impl fmt::Debug for MuBoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MuBoundaryCondition::NeumannZeroFlux => write!(f, "NeumannZeroFlux"),
            MuBoundaryCondition::Dirichlet(_) => write!(f, "Dirichlet(..)"),
        }
    }
}

/// Uniform cell-centered tensor grid on `(0, L_x) × (0, L_y) × (0, L_z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    cells: [usize; 3],
    lengths: [f64; 3],
}

impl Grid {
    pub fn new(cells: &[usize], lengths: &[f64]) -> Result<Self> {
        let dim = cells.len();
        if !(1..=3).contains(&dim) || lengths.len() != dim {
            return Err(Error::Grid(format!(
                "need 1 to 3 axes with matching lengths, got {} cell counts and {} lengths",
                cells.len(),
                lengths.len()
            )));
        }
        let mut c = [1usize; 3];
        let mut l = [1.0f64; 3];
        for a in 0..dim {
            if cells[a] < 3 {
                return Err(Error::Grid(format!("axis {} has {} cells, need at least 3", a, cells[a])));
            }
            if !(lengths[a] > 0.0) || !lengths[a].is_finite() {
                return Err(Error::Grid(format!("axis {} has invalid length {}", a, lengths[a])));
            }
            c[a] = cells[a];
            l[a] = lengths[a];
        }
        Ok(Grid { dim, cells: c, lengths: l })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths[..self.dim]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.cells[axis] as f64
    }

    pub fn n_cells(&self) -> usize {
        self.cells.iter().product()
    }

    /// `|Ω|`.
    pub fn volume(&self) -> f64 {
        self.lengths[..self.dim].iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.volume() / self.n_cells() as f64
    }

    /// Row-major strides (last axis fastest).
    pub(crate) fn strides(&self) -> [usize; 3] {
        [self.cells[1] * self.cells[2], self.cells[2], 1]
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        let s = self.strides();
        i * s[0] + j * s[1] + k * s[2]
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 3] {
        let s = self.strides();
        [idx / s[0], (idx / s[1]) % self.cells[1], idx % self.cells[2]]
    }

    pub fn cell_center(&self, idx: usize) -> Point {
        let m = self.multi_index(idx);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = (m[a] as f64 + 0.5) * self.spacing(a);
        }
        x
    }

    /// Every boundary face as `(cell index, axis, upper side?, face center)`.
    pub fn boundary_faces(&self) -> Vec<(usize, usize, bool, Point)> {
        let mut out = Vec::new();
        for idx in 0..self.n_cells() {
            let m = self.multi_index(idx);
            for a in 0..self.dim {
                for &upper in &[false, true] {
                    let on_face = if upper { m[a] == self.cells[a] - 1 } else { m[a] == 0 };
                    if on_face {
                        let mut x = self.cell_center(idx);
                        x[a] = if upper { self.lengths[a] } else { 0.0 };
                        out.push((idx, a, upper, x));
                    }
                }
            }
        }
        out
    }

    /// The same grid with every length multiplied by `factor`.
    pub fn dilated(&self, factor: f64) -> Result<Self> {
        let lengths: Vec<f64> = self.lengths().iter().map(|l| l * factor).collect();
        Grid::new(self.cells(), &lengths)
    }
}

/// Cell values of a scalar function, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Field { grid: *grid, values: vec![0.0; grid.n_cells()] }
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Field { grid: *grid, values: vec![c; grid.n_cells()] }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&Point) -> f64) -> Self {
        let values = (0..grid.n_cells()).map(|i| f(&grid.cell_center(i))).collect();
        Field { grid: *grid, values }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::Grid(format!("expected {} values, got {}", grid.n_cells(), values.len())));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Grid(format!("non-finite cell value {}", v)));
        }
        Ok(Field { grid: *grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn try_map(&self, f: impl Fn(f64) -> Result<f64>) -> Result<Field> {
        let values = self.values.iter().map(|&v| f(v)).collect::<Result<Vec<_>>>()?;
        Ok(Field { grid: self.grid, values })
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert_eq!(self.values.len(), other.values.len());
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Field { grid: self.grid, values }
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Field {
        self.map(|v| s * v)
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Field) {
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
    }

    /// Discrete `L²(Ω)` inner product.
    pub fn dot(&self, other: &Field) -> f64 {
        self.grid.cell_volume() * self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Volume-weighted mean value.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn h1_seminorm(&self) -> f64 {
        self.grid.dirichlet_form(self, self).max(0.0).sqrt()
    }

    /// `(L², H¹ seminorm, L∞)`.
    pub fn norms(&self) -> (f64, f64, f64) {
        (self.l2_norm(), self.h1_seminorm(), self.linf_norm())
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Subtracts the mean value in place.
    pub fn remove_mean(&mut self) {
        let m = self.mean();
        for v in &mut self.values {
            *v -= m;
        }
    }
}

/// Mean value of a field on `grid`.
pub fn mean(_grid: &Grid, field: &Field) -> f64 {
    field.mean()
}

/// `(L², H¹ seminorm, L∞)` norms of a field.
pub fn norms(_grid: &Grid, field: &Field) -> (f64, f64, f64) {
    field.norms()
}
