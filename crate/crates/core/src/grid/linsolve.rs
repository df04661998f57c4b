//! Preconditioned conjugate gradients for the discrete Laplacians and the
//! inverse operators `𝒩`, `𝒟` built on them.

use super::{BoundaryKind, Field, Grid, SpaceTimeFn};
use crate::error::{Error, Result};

/// Relative residual tolerance of the elliptic solves.
pub const CG_RTOL: f64 = 1e-11;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn project_mean_free(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Solves `A x = b` for symmetric positive (semi)definite `A` given as a
/// closure. With `mean_free` set, `b`, the iterates and the residuals are kept
/// in the mean-free subspace. `x` holds the initial guess on entry. Returns
/// the iteration count.
pub(crate) fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    precond: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    mean_free: bool,
    rtol: f64,
    max_iter: usize,
) -> Result<usize> {
    let n = b.len();
    let mut rhs = b.to_vec();
    if mean_free {
        project_mean_free(&mut rhs);
        project_mean_free(x);
    }
    let bnorm = dot(&rhs, &rhs).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    if mean_free {
        project_mean_free(&mut r);
    }
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    if mean_free {
        project_mean_free(&mut z);
    }
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = dot(&r, &r).sqrt() / bnorm;
    for it in 0..max_iter {
        if rel <= rtol {
            return Ok(it);
        }
        apply(&p, &mut ap);
        if mean_free {
            project_mean_free(&mut ap);
        }
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Solve { residual: rel, iterations: it });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        precond(&r, &mut z);
        if mean_free {
            project_mean_free(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rel = dot(&r, &r).sqrt() / bnorm;
    }
    if rel <= rtol {
        return Ok(max_iter);
    }
    Err(Error::Solve { residual: rel, iterations: max_iter })
}

fn solve_laplacian(grid: &Grid, kind: BoundaryKind, psi: &Field) -> Result<Field> {
    let diag = grid.laplacian_diagonal(kind);
    let mut x = vec![0.0; grid.n_cells()];
    let max_iter = 20 * grid.n_cells() + 100;
    pcg(
        |u, out| {
            grid.apply_laplacian(kind, u, out);
            out.iter_mut().for_each(|v| *v = -*v);
        },
        |r, z| {
            for i in 0..r.len() {
                z[i] = r[i] / diag[i];
            }
        },
        psi.values(),
        &mut x,
        kind == BoundaryKind::Neumann,
        CG_RTOL,
        max_iter,
    )?;
    let mut out = Field::from_values(grid, x)?;
    if kind == BoundaryKind::Neumann {
        out.remove_mean();
    }
    Ok(out)
}

/// `𝒩ψ`: the mean-free solution of `-Δ_N u = ψ`; requires `mean ψ = 0`.
pub fn inverse_neumann(grid: &Grid, psi: &Field) -> Result<Field> {
    let mean = psi.mean();
    let tol = 1e-10 * (psi.l2_norm() / grid.volume().sqrt()).max(f64::MIN_POSITIVE);
    if mean.abs() > tol {
        return Err(Error::Mean { mean, tolerance: tol });
    }
    solve_laplacian(grid, BoundaryKind::Neumann, psi)
}

/// `𝒟ψ`: the solution of `-Δ_D u = ψ` with homogeneous Dirichlet data.
pub fn inverse_dirichlet(grid: &Grid, psi: &Field) -> Result<Field> {
    solve_laplacian(grid, BoundaryKind::Dirichlet, psi)
}

/// Discrete harmonic field with trace `datum(·, t)` on the boundary faces.
pub fn harmonic_extension(grid: &Grid, datum: &SpaceTimeFn, t: f64) -> Result<Field> {
    let source = grid.dirichlet_boundary_source(|x| datum(x, t));
    inverse_dirichlet(grid, &source)
}

/// Dual norm `‖ψ‖_*`: Neumann uses `𝒩` on the mean-free part plus `|mean ψ|`,
/// Dirichlet uses `𝒟`.
pub fn dual_norm(grid: &Grid, psi: &Field, kind: BoundaryKind) -> Result<f64> {
    match kind {
        BoundaryKind::Neumann => {
            let m = psi.mean();
            let mut free = psi.clone();
            free.remove_mean();
            let u = solve_laplacian(grid, BoundaryKind::Neumann, &free)?;
            Ok((free.dot(&u).max(0.0) + m * m).sqrt())
        }
        BoundaryKind::Dirichlet => {
            let u = inverse_dirichlet(grid, psi)?;
            Ok(psi.dot(&u).max(0.0).sqrt())
        }
    }
}
