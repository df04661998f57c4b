//! Operator cache shared by the steppers.

use crate::error::Result;
use crate::grid::{inverse_dirichlet, inverse_neumann, BoundaryKind, Field, Grid, SpectralOps};

use super::LinearBackend;

pub(crate) struct Ops {
    pub grid: Grid,
    pub spectral: SpectralOps,
    pub lam_n: Vec<f64>,
    pub lam_d: Vec<f64>,
    pub backend: LinearBackend,
}

pub(crate) fn project_mean_free(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Ops {
    pub fn new(grid: &Grid, backend: LinearBackend) -> Self {
        let spectral = SpectralOps::new(grid);
        let lam_n = spectral.eigenvalues(BoundaryKind::Neumann);
        let lam_d = spectral.eigenvalues(BoundaryKind::Dirichlet);
        Ops { grid: *grid, spectral, lam_n, lam_d, backend }
    }

    /// Volume-weighted L² norm of a cell vector.
    pub fn l2(&self, v: &[f64]) -> f64 {
        (dot(v, v) * self.grid.cell_volume()).sqrt()
    }

    pub fn laplacian_neumann(&self, u: &[f64], out: &mut [f64]) {
        self.grid.apply_laplacian(BoundaryKind::Neumann, u, out);
    }

    /// `𝒩ψ` for mean-free `ψ`.
    pub fn inv_neumann(&self, psi: &[f64]) -> Result<Vec<f64>> {
        match self.backend {
            LinearBackend::Spectral => {
                let mut c = self.spectral.forward(BoundaryKind::Neumann, psi);
                for (v, &l) in c.iter_mut().zip(&self.lam_n) {
                    *v = if l > 0.0 { *v / l } else { 0.0 };
                }
                let mut out = self.spectral.inverse(BoundaryKind::Neumann, &c);
                project_mean_free(&mut out);
                Ok(out)
            }
            LinearBackend::Cg => {
                let mut p = psi.to_vec();
                project_mean_free(&mut p);
                Ok(inverse_neumann(&self.grid, &Field::from_values(&self.grid, p)?)?.into_values())
            }
        }
    }

    /// `𝒟ψ`.
    pub fn inv_dirichlet(&self, psi: &[f64]) -> Result<Vec<f64>> {
        match self.backend {
            LinearBackend::Spectral => {
                let mut c = self.spectral.forward(BoundaryKind::Dirichlet, psi);
                for (v, &l) in c.iter_mut().zip(&self.lam_d) {
                    *v /= l;
                }
                Ok(self.spectral.inverse(BoundaryKind::Dirichlet, &c))
            }
            LinearBackend::Cg => {
                Ok(inverse_dirichlet(&self.grid, &Field::from_values(&self.grid, psi.to_vec())?)?.into_values())
            }
        }
    }

    /// Applies `symbol(λ)` in the cosine basis of `-Δ_N`.
    pub fn cos_symbol(&self, r: &[f64], symbol: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut c = self.spectral.forward(BoundaryKind::Neumann, r);
        for (v, &l) in c.iter_mut().zip(&self.lam_n) {
            *v *= symbol(l);
        }
        self.spectral.inverse(BoundaryKind::Neumann, &c)
    }

    /// Squared dual norm `⟨v, 𝒩v⟩` (mean-free part plus mean²) or `⟨v, 𝒟v⟩`.
    pub fn dual_norm_sq(&self, kind: BoundaryKind, v: &[f64]) -> Result<f64> {
        let cv = self.grid.cell_volume();
        match kind {
            BoundaryKind::Neumann => {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                let mut free = v.to_vec();
                project_mean_free(&mut free);
                let u = self.inv_neumann(&free)?;
                Ok((dot(&free, &u) * cv).max(0.0) + m * m)
            }
            BoundaryKind::Dirichlet => {
                let u = self.inv_dirichlet(v)?;
                Ok((dot(v, &u) * cv).max(0.0))
            }
        }
    }
}
