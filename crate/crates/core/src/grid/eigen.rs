//! Discrete Neumann eigenbasis used by the Galerkin stepper.

use super::{BoundaryKind, Field, Grid, SpectralOps};
use crate::error::{Error, Result};

/// The first `n` tensor-product cosine modes of `-Δ_N`, sorted by eigenvalue
/// and orthonormal in the discrete `L²(Ω)` inner product.
#[derive(Debug, Clone)]
pub struct NeumannEigenbasis {
    ops: SpectralOps,
    eigenvalues: Vec<f64>,
    /// Row-major coefficient slot of each retained mode.
    slots: Vec<usize>,
}

/// Builds the eigenbasis with `n` modes; `λ₁ = 0` and `e₁ = |Ω|^{-1/2}`.
pub fn neumann_eigenbasis(grid: &Grid, n: usize) -> Result<NeumannEigenbasis> {
    let total = grid.n_cells();
    if n == 0 || n > total {
        return Err(Error::Range { requested: n, available: total });
    }
    let ops = SpectralOps::new(grid);
    let all = ops.eigenvalues(BoundaryKind::Neumann);
    let mut order: Vec<usize> = (0..total).collect();
    // Ties keep row-major order, so the selection is deterministic.
    order.sort_by(|&a, &b| all[a].partial_cmp(&all[b]).unwrap().then(a.cmp(&b)));
    order.truncate(n);
    let eigenvalues = order.iter().map(|&s| all[s]).collect();
    Ok(NeumannEigenbasis { ops, eigenvalues, slots: order })
}

impl NeumannEigenbasis {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn grid(&self) -> &Grid {
        self.ops.grid()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Per-axis wave numbers of mode `j`.
    pub fn wave_numbers(&self, j: usize) -> [usize; 3] {
        self.grid().multi_index(self.slots[j])
    }

    /// Mode `j` sampled at the cell centers.
    pub fn mode(&self, j: usize) -> Field {
        let mut c = vec![0.0; self.grid().n_cells()];
        c[self.slots[j]] = 1.0;
        self.synth_raw(&c)
    }

    fn synth_raw(&self, raw: &[f64]) -> Field {
        let scale = 1.0 / self.grid().cell_volume().sqrt();
        let vals = self.ops.inverse(BoundaryKind::Neumann, raw);
        Field::from_values(self.grid(), vals.into_iter().map(|v| v * scale).collect())
            .expect("synthesized values are finite")
    }

    /// `⟨u, e_j⟩` for every retained mode.
    pub fn project(&self, u: &Field) -> Vec<f64> {
        let raw = self.ops.forward(BoundaryKind::Neumann, u.values());
        let scale = self.grid().cell_volume().sqrt();
        self.slots.iter().map(|&s| raw[s] * scale).collect()
    }

    /// `Σ_j c_j e_j`.
    pub fn synthesize(&self, coeffs: &[f64]) -> Field {
        let mut raw = vec![0.0; self.grid().n_cells()];
        for (&s, &c) in self.slots.iter().zip(coeffs) {
            raw[s] = c;
        }
        self.synth_raw(&raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_mode_is_constant() {
        let g = Grid::new(&[6, 5], &[2.0, 0.5]).unwrap();
        let b = neumann_eigenbasis(&g, 10).unwrap();
        assert_eq!(b.eigenvalues()[0], 0.0);
        let e1 = b.mode(0);
        let c = g.volume().powf(-0.5);
        assert!(e1.values().iter().all(|v| (v - c).abs() < 1e-13));
        assert!(b.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn modes_are_orthonormal_eigenvectors() {
        let g = Grid::new(&[5, 4, 3], &[1.0, 0.7, 1.3]).unwrap();
        let b = neumann_eigenbasis(&g, 25).unwrap();
        let modes: Vec<Field> = (0..b.len()).map(|j| b.mode(j)).collect();
        for i in 0..modes.len() {
            for j in 0..modes.len() {
                let ip = modes[i].dot(&modes[j]);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-12, "<e{},e{}> = {}", i, j, ip);
            }
            let lap = g.laplacian_neumann(&modes[i]);
            let lam = b.eigenvalues()[i];
            let res = lap.add(&modes[i].scale(lam));
            assert!(res.l2_norm() <= 1e-10 * lam.max(1.0));
        }
    }

    #[test]
    fn projection_round_trip() {
        let g = Grid::new(&[16], &[1.0]).unwrap();
        let b = neumann_eigenbasis(&g, 16).unwrap();
        let u = Field::from_fn(&g, |x| (3.0 * x[0]).sin() + x[0] * x[0]);
        let back = b.synthesize(&b.project(&u));
        assert!(back.sub(&u).linf_norm() < 1e-12);
    }

    #[test]
    fn too_many_modes() {
        let g = Grid::new(&[4], &[1.0]).unwrap();
        assert!(matches!(neumann_eigenbasis(&g, 5), Err(Error::Range { .. })));
        assert!(neumann_eigenbasis(&g, 0).is_err());
    }
}
