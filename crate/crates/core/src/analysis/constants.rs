use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::solver::{ProblemData, Trajectory};
use std::f64::consts::PI;

/// Volume exponent `a` making `‖v‖∞ / (|Ω|^a ‖Δv‖)` invariant under
/// dilations in dimension `d`: `a = 2/d − 1/2`, i.e. `1/6` in 3D.
pub fn embedding_exponent(dim: usize) -> f64 {
    2.0 / dim as f64 - 0.5
}

/// Lower estimate of the shape constant in `‖v‖∞ ≤ C |Ω|^a ‖Δv‖` on `W₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingProbe {
    pub estimate: f64,
    pub exponent: f64,
    /// Number of probe fields tried.
    pub family_size: usize,
    /// Description of the maximizing probe.
    pub best: String,
}

const MODES_PER_AXIS: usize = 3;
const RANDOM_PROBES: usize = 32;
const PROBE_SEED: u64 = 0x5eed_c0de;

fn sine_mode(grid: &Grid, k: [usize; 3]) -> Field {
    let l = grid.lengths().to_vec();
    Field::from_fn(grid, |x| (0..grid.dim()).map(|a| (PI * (k[a] + 1) as f64 * x[a] / l[a]).sin()).product())
}

fn ratio(grid: &Grid, v: &Field, exponent: f64) -> f64 {
    v.linf_norm() / (grid.volume().powf(exponent) * grid.laplacian_dirichlet(v).l2_norm())
}

/// Maximizes the ratio over low Dirichlet sine modes and seeded random
/// combinations of them. The family depends only on the domain shape, so
/// the estimate is mesh-independent up to discretization error.
pub fn embedding_constant_probe(grid: &Grid) -> EmbeddingProbe {
    let exponent = embedding_exponent(grid.dim());
    let per_axis: Vec<usize> = (0..3).map(|a| if a < grid.dim() { MODES_PER_AXIS.min(grid.cells()[a]) } else { 1 }).collect();
    let mut modes = Vec::new();
    for i in 0..per_axis[0] {
        for j in 0..per_axis[1] {
            for k in 0..per_axis[2] {
                modes.push(([i, j, k], sine_mode(grid, [i, j, k])));
            }
        }
    }
    let mut best = (0.0, String::new());
    for (k, v) in &modes {
        let r = ratio(grid, v, exponent);
        if r > best.0 {
            best = (r, format!("sine mode {:?}", &k[..grid.dim()]));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    for p in 0..RANDOM_PROBES {
        let mut v = Field::zeros(grid);
        for (k, m) in &modes {
            let w = 1.0 + k.iter().map(|&ki| ((ki + 1) * (ki + 1)) as f64).sum::<f64>();
            v.axpy(rng.gen_range(-1.0..1.0) / w, m);
        }
        let r = ratio(grid, &v, exponent);
        if r > best.0 {
            best = (r, format!("random combination {}", p));
        }
    }
    EmbeddingProbe { estimate: best.0, exponent, family_size: modes.len() + RANDOM_PROBES, best: best.1 }
}

/// Empirical `C₂ = max_t ‖∂tφ‖ / (|Ω|^{1/2} ρ)` from a controlled run.
pub fn fifth_estimate_ratio(traj: &Trajectory, data: &ProblemData) -> Result<f64> {
    let rho = data.smc.rho;
    if !(rho > 0.0) {
        return Err(Error::Param("the time-derivative ratio needs an active control".into()));
    }
    let dphi = traj.diagnostics.rows.iter().map(|r| r.l2_dphi).fold(0.0, f64::max);
    Ok(dphi / (data.grid().volume().sqrt() * rho))
}

/// Chain of constants leading to `C_str`. The chain is an empirical
/// surrogate: `C_sh` and `C₂` are measured, not proven bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructuralConstants {
    pub csh: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub cstr: f64,
}

pub fn structural_constants(csh: f64, c2: f64, tau: f64, pi_lipschitz: f64) -> StructuralConstants {
    let c3 = csh * c2;
    let c4 = c3.max(tau * c2 + 1.0);
    let c5 = csh * c4;
    let c6 = c5 * pi_lipschitz;
    StructuralConstants { csh, c2, c3, c4, c5, c6, cstr: c3 + c6 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BoundaryKind, SpectralOps};

    #[test]
    fn exponent_in_three_dimensions() {
        assert!((embedding_exponent(3) - 1.0 / 6.0).abs() < 1e-15);
        assert!((embedding_exponent(1) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn first_mode_ratio_closed_form() {
        let g = Grid::new(&[16, 12, 10], &[1.0, 0.8, 0.5]).unwrap();
        let v = sine_mode(&g, [0, 0, 0]);
        let lam = SpectralOps::new(&g).eigenvalue(BoundaryKind::Dirichlet, &[0, 0, 0]);
        let expected = v.linf_norm() / (g.volume().powf(1.0 / 6.0) * lam * v.l2_norm());
        assert!((ratio(&g, &v, 1.0 / 6.0) / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dilation_invariance() {
        let g = Grid::new(&[8, 8, 8], &[1.0, 0.7, 0.6]).unwrap();
        for factor in [0.3, 2.5] {
            let d = g.dilated(factor).unwrap();
            let a = ratio(&g, &sine_mode(&g, [0, 0, 0]), 1.0 / 6.0);
            let b = ratio(&d, &sine_mode(&d, [0, 0, 0]), 1.0 / 6.0);
            assert!((a - b).abs() <= 1e-6 * a);
        }
    }

    #[test]
    fn chain_arithmetic() {
        let c = structural_constants(2.0, 0.5, 1.0, 3.0);
        assert_eq!((c.c3, c.c4, c.c5, c.c6, c.cstr), (1.0, 1.5, 3.0, 9.0, 10.0));
    }
}
