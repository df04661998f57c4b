//! Inexact Newton iteration with a matrix-free CG inner solve.

use crate::error::{Error, Result};
use crate::grid::linsolve::pcg;

/// A nonlinear system `R(x) = 0` with a symmetric positive definite
/// Jacobian (on the mean-free subspace when `mean_free` is set).
pub(crate) trait NewtonSystem {
    /// Evaluates `R(x)`; caches what the Jacobian at `x` needs.
    fn residual(&mut self, x: &[f64], out: &mut [f64]) -> Result<()>;
    fn apply_jacobian(&self, v: &[f64], out: &mut [f64]);
    fn precondition(&self, r: &[f64], out: &mut [f64]);
    fn norm(&self, r: &[f64]) -> f64;
    /// Size of the largest term in the last residual; bounds the attainable
    /// residual in floating point.
    fn scale(&self) -> f64;
    fn mean_free(&self) -> bool;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct NewtonSettings {
    pub tol: f64,
    pub max_iter: usize,
}

pub(crate) struct NewtonResult {
    pub iterations: usize,
}

const LINE_SEARCH_STEPS: usize = 12;

/// Solves in place starting from `x`. On failure the error carries `t = NaN`;
/// the caller attaches the step time.
pub(crate) fn solve(sys: &mut impl NewtonSystem, x: &mut Vec<f64>, settings: NewtonSettings) -> Result<NewtonResult> {
    let n = x.len();
    let mut r = vec![0.0; n];
    sys.residual(x, &mut r)?;
    let mut nr = sys.norm(&r);
    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; n];
    for it in 0..settings.max_iter {
        if nr <= settings.tol.max(64.0 * f64::EPSILON * sys.scale()) {
            return Ok(NewtonResult { iterations: it });
        }
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let mut s = vec![0.0; n];
        let eta = (1e-2 * nr.min(1.0)).max(1e-13);
        pcg(
            |v, out| sys.apply_jacobian(v, out),
            |v, out| sys.precondition(v, out),
            &rhs,
            &mut s,
            sys.mean_free(),
            eta,
            10 * n + 200,
        )
        .map_err(|_| Error::Newton { t: f64::NAN, residual: nr, iterations: it })?;

        let mut lambda = 1.0;
        for k in 0..LINE_SEARCH_STEPS {
            for i in 0..n {
                trial[i] = x[i] + lambda * s[i];
            }
            sys.residual(&trial, &mut r_trial)?;
            let nt = sys.norm(&r_trial);
            if nt <= (1.0 - 1e-4 * lambda) * nr || k + 1 == LINE_SEARCH_STEPS {
                nr = nt;
                break;
            }
            lambda *= 0.5;
        }
        std::mem::swap(x, &mut trial);
        std::mem::swap(&mut r, &mut r_trial);
    }
    if nr <= settings.tol.max(64.0 * f64::EPSILON * sys.scale()) {
        return Ok(NewtonResult { iterations: settings.max_iter });
    }
    Err(Error::Newton { t: f64::NAN, residual: nr, iterations: settings.max_iter })
}
