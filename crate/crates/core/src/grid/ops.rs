//! Second-order cell-centered stencils with ghost-cell boundary conditions.

use super::{BoundaryKind, Field, Grid, Point};

impl Grid {
    /// Applies the discrete Laplacian with mirror (Neumann) or odd-reflection
    /// (homogeneous Dirichlet) ghost cells into `out`.
    pub(crate) fn apply_laplacian(&self, kind: BoundaryKind, u: &[f64], out: &mut [f64]) {
        let strides = self.strides();
        let ghost_sign = match kind {
            BoundaryKind::Neumann => 1.0,
            BoundaryKind::Dirichlet => -1.0,
        };
        out.iter_mut().for_each(|v| *v = 0.0);
        for a in 0..self.dim {
            let n = self.cells[a];
            let s = strides[a];
            let inv_h2 = 1.0 / (self.spacing(a) * self.spacing(a));
            for (idx, o) in out.iter_mut().enumerate() {
                let pos = (idx / s) % n;
                let c = u[idx];
                let left = if pos > 0 { u[idx - s] } else { ghost_sign * c };
                let right = if pos + 1 < n { u[idx + s] } else { ghost_sign * c };
                *o += (left - 2.0 * c + right) * inv_h2;
            }
        }
    }

    /// Diagonal of `-Δ` for the given boundary kind.
    pub(crate) fn laplacian_diagonal(&self, kind: BoundaryKind) -> Vec<f64> {
        let strides = self.strides();
        let mut diag = vec![0.0; self.n_cells()];
        for a in 0..self.dim {
            let n = self.cells[a];
            let s = strides[a];
            let inv_h2 = 1.0 / (self.spacing(a) * self.spacing(a));
            for (idx, d) in diag.iter_mut().enumerate() {
                let pos = (idx / s) % n;
                let boundary_sides = (pos == 0) as usize + (pos + 1 == n) as usize;
                *d += match kind {
                    BoundaryKind::Neumann => (2 - boundary_sides) as f64 * inv_h2,
                    BoundaryKind::Dirichlet => (2 + boundary_sides) as f64 * inv_h2,
                };
            }
        }
        diag
    }

    pub fn laplacian_neumann(&self, u: &Field) -> Field {
        let mut out = Field::zeros(self);
        self.apply_laplacian(BoundaryKind::Neumann, u.values(), out.values_mut());
        out
    }

    pub fn laplacian_dirichlet(&self, u: &Field) -> Field {
        let mut out = Field::zeros(self);
        self.apply_laplacian(BoundaryKind::Dirichlet, u.values(), out.values_mut());
        out
    }

    /// Boundary contribution `2 μ_Γ / h²` moved to the right-hand side when the
    /// Dirichlet ghost value is `2 μ_Γ - u`.
    pub(crate) fn dirichlet_boundary_source(&self, datum: impl Fn(&Point) -> f64) -> Field {
        let mut out = Field::zeros(self);
        for (idx, axis, _, x) in self.boundary_faces() {
            let h = self.spacing(axis);
            out.values_mut()[idx] += 2.0 * datum(&x) / (h * h);
        }
        out
    }

    /// Discrete Dirichlet form `Σ_faces (Du)(Dv) |cell|` over interior faces,
    /// equal to `⟨-Δ_N u, v⟩`.
    pub fn dirichlet_form(&self, u: &Field, v: &Field) -> f64 {
        self.face_form(u.values(), v.values(), false)
    }

    /// Dirichlet form including boundary faces, equal to `⟨-Δ_D u, v⟩`.
    pub fn dirichlet_form_zero(&self, u: &Field, v: &Field) -> f64 {
        self.face_form(u.values(), v.values(), true)
    }

    fn face_form(&self, u: &[f64], v: &[f64], with_boundary: bool) -> f64 {
        let strides = self.strides();
        let mut acc = 0.0;
        for a in 0..self.dim {
            let n = self.cells[a];
            let s = strides[a];
            let inv_h2 = 1.0 / (self.spacing(a) * self.spacing(a));
            for idx in 0..u.len() {
                let pos = (idx / s) % n;
                if pos + 1 < n {
                    acc += (u[idx + s] - u[idx]) * (v[idx + s] - v[idx]) * inv_h2;
                }
                if with_boundary {
                    let sides = (pos == 0) as usize + (pos + 1 == n) as usize;
                    acc += 2.0 * sides as f64 * u[idx] * v[idx] * inv_h2;
                }
            }
        }
        acc * self.cell_volume()
    }
}
