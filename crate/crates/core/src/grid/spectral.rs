//! Separable eigen-transforms of the discrete Laplacians.
//!
//! On a uniform cell-centered grid the mirrored stencil is diagonalized by the
//! DCT-II basis and the odd-reflection stencil by the DST-II basis, exactly.
//! Transforms are applied axis by axis with dense orthonormal matrices, which
//! keeps them deterministic and accurate to rounding.

use std::f64::consts::PI;

use super::{BoundaryKind, Field, Grid};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct AxisBasis {
    n: usize,
    /// Row `k` holds mode `k` sampled at the cell centers, Euclidean-orthonormal.
    cos: Vec<f64>,
    sin: Vec<f64>,
    cos_eig: Vec<f64>,
    sin_eig: Vec<f64>,
}

impl AxisBasis {
    fn new(n: usize, h: f64) -> Self {
        let nf = n as f64;
        let mut cos = vec![0.0; n * n];
        let mut sin = vec![0.0; n * n];
        let mut cos_eig = vec![0.0; n];
        let mut sin_eig = vec![0.0; n];
        for k in 0..n {
            let ck = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            let m = k + 1;
            let sk = if m == n { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            for i in 0..n {
                let x = i as f64 + 0.5;
                cos[k * n + i] = ck * (PI * k as f64 * x / nf).cos();
                sin[k * n + i] = sk * (PI * m as f64 * x / nf).sin();
            }
            cos_eig[k] = 2.0 / (h * h) * (1.0 - (PI * k as f64 / nf).cos());
            sin_eig[k] = 2.0 / (h * h) * (1.0 - (PI * m as f64 / nf).cos());
        }
        AxisBasis { n, cos, sin, cos_eig, sin_eig }
    }
}

/// Precomputed eigen-transforms for one grid.
#[derive(Debug, Clone)]
pub struct SpectralOps {
    grid: Grid,
    axes: Vec<AxisBasis>,
}

impl SpectralOps {
    pub fn new(grid: &Grid) -> Self {
        let axes = (0..grid.dim()).map(|a| AxisBasis::new(grid.cells()[a], grid.spacing(a))).collect();
        SpectralOps { grid: *grid, axes }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Eigenvalue of `-Δ` for the mode with multi-index `k`.
    pub fn eigenvalue(&self, kind: BoundaryKind, k: &[usize; 3]) -> f64 {
        self.axes
            .iter()
            .enumerate()
            .map(|(a, b)| match kind {
                BoundaryKind::Neumann => b.cos_eig[k[a]],
                BoundaryKind::Dirichlet => b.sin_eig[k[a]],
            })
            .sum()
    }

    /// Eigenvalue of `-Δ` for every coefficient slot, in row-major order.
    pub fn eigenvalues(&self, kind: BoundaryKind) -> Vec<f64> {
        (0..self.grid.n_cells()).map(|idx| self.eigenvalue(kind, &self.grid.multi_index(idx))).collect()
    }

    fn transform(&self, kind: BoundaryKind, data: &mut [f64], inverse: bool) {
        let strides = self.grid.strides();
        let mut line = Vec::new();
        let mut out = Vec::new();
        for (a, basis) in self.axes.iter().enumerate() {
            let n = basis.n;
            let s = strides[a];
            let mat = match kind {
                BoundaryKind::Neumann => &basis.cos,
                BoundaryKind::Dirichlet => &basis.sin,
            };
            line.resize(n, 0.0);
            out.resize(n, 0.0);
            for start in 0..data.len() {
                if !(start / s).is_multiple_of(n) {
                    continue;
                }
                for i in 0..n {
                    line[i] = data[start + i * s];
                }
                for (r, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    if inverse {
                        for (k, l) in line.iter().enumerate() {
                            acc += mat[k * n + r] * l;
                        }
                    } else {
                        let row = &mat[r * n..(r + 1) * n];
                        for (m, l) in row.iter().zip(line.iter()) {
                            acc += m * l;
                        }
                    }
                    *o = acc;
                }
                for i in 0..n {
                    data[start + i * s] = out[i];
                }
            }
        }
    }

    /// Coefficients of `u` in the orthonormal eigenvector basis.
    pub fn forward(&self, kind: BoundaryKind, u: &[f64]) -> Vec<f64> {
        let mut c = u.to_vec();
        self.transform(kind, &mut c, false);
        c
    }

    pub fn inverse(&self, kind: BoundaryKind, coeffs: &[f64]) -> Vec<f64> {
        let mut u = coeffs.to_vec();
        self.transform(kind, &mut u, true);
        u
    }

    /// Applies `φ(λ)` to `u` where `λ` runs over the eigenvalues of `-Δ`.
    pub fn apply_symbol(&self, kind: BoundaryKind, u: &[f64], symbol: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut c = self.forward(kind, u);
        for (idx, v) in c.iter_mut().enumerate() {
            *v *= symbol(self.eigenvalue(kind, &self.grid.multi_index(idx)));
        }
        self.inverse(kind, &c)
    }

    /// `𝒩ψ` for mean-free `ψ` (the zero mode is dropped).
    pub fn inverse_neumann(&self, psi: &Field) -> Result<Field> {
        let mean = psi.mean();
        let tol = 1e-10 * (psi.l2_norm() / self.grid.volume().sqrt()).max(f64::MIN_POSITIVE);
        if mean.abs() > tol {
            return Err(Error::Mean { mean, tolerance: tol });
        }
        let vals = self.apply_symbol(BoundaryKind::Neumann, psi.values(), |l| if l > 0.0 { 1.0 / l } else { 0.0 });
        let mut out = Field::from_values(&self.grid, vals)?;
        out.remove_mean();
        Ok(out)
    }

    /// `𝒟ψ`.
    pub fn inverse_dirichlet(&self, psi: &Field) -> Result<Field> {
        let vals = self.apply_symbol(BoundaryKind::Dirichlet, psi.values(), |l| 1.0 / l);
        Field::from_values(&self.grid, vals)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn transforms_are_orthonormal() {
        let g = Grid::new(&[5, 4, 3], &[1.0, 2.0, 0.5]).unwrap();
        let sp = SpectralOps::new(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u: Vec<f64> = (0..g.n_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for kind in [BoundaryKind::Neumann, BoundaryKind::Dirichlet] {
            let c = sp.forward(kind, &u);
            let back = sp.inverse(kind, &c);
            let e2: f64 = u.iter().map(|v| v * v).sum();
            let c2: f64 = c.iter().map(|v| v * v).sum();
            assert!((e2 - c2).abs() < 1e-12 * e2);
            for (a, b) in u.iter().zip(&back) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn symbol_of_laplacian_matches_stencil() {
        let g = Grid::new(&[7, 6], &[1.0, 0.6]).unwrap();
        let sp = SpectralOps::new(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = Field::from_values(&g, (0..g.n_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        for kind in [BoundaryKind::Neumann, BoundaryKind::Dirichlet] {
            let spec = sp.apply_symbol(kind, u.values(), |l| -l);
            let mut direct = vec![0.0; g.n_cells()];
            g.apply_laplacian(kind, u.values(), &mut direct);
            let scale = direct.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in spec.iter().zip(&direct) {
                assert!((a - b).abs() < 1e-11 * scale);
            }
        }
    }
}
