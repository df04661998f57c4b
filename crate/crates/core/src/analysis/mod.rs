//! Verification harness: conservation, comparison and sliding checks,
//! continuous-dependence and Yosida-convergence studies, and empirical
//! probes for the constants entering the gain design.

mod constants;
mod contdep;
mod sliding;
mod yosida;

pub use constants::{
    embedding_constant_probe, embedding_exponent, fifth_estimate_ratio, structural_constants, EmbeddingProbe,
    StructuralConstants,
};
pub use contdep::{contdep_experiment, ContdepReport, ContdepRow, Perturbation};
pub use sliding::{sliding_experiment, SlidingReport, SlidingSettings};
pub use yosida::{yosida_convergence_study, YosidaStudy};

use crate::error::{Error, Result};
use crate::grid::BoundaryKind;
use crate::smc::ode_w_closed_form;
use crate::solver::{ProblemData, Trajectory};

/// Outcome of the mass-conservation check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassCheck {
    pub passed: bool,
    pub max_drift: f64,
    pub tolerance: f64,
}

/// `max_t |mean φ(t) − mean φ0|` over every recorded step; passes iff it is
/// at most `1e−12 (1 + |mean φ0|)`.
pub fn check_mass_conservation(traj: &Trajectory) -> Result<MassCheck> {
    if traj.regime != BoundaryKind::Neumann {
        return Err(Error::Regime("mass is not conserved under Dirichlet conditions for mu".into()));
    }
    let rows = &traj.diagnostics.rows;
    let m0 = rows.first().map(|r| r.mean_phi).unwrap_or(0.0);
    let max_drift = rows.iter().map(|r| (r.mean_phi - m0).abs()).fold(0.0, f64::max);
    let tolerance = 1e-12 * (1.0 + m0.abs());
    Ok(MassCheck { passed: max_drift <= tolerance, max_drift, tolerance })
}

/// Smallest sampled time from which `sup|χ|` stays at or below `tol`.
pub fn detect_sliding(times: &[f64], sup_chi: &[f64], tol: f64) -> Option<f64> {
    let mut first = None;
    for (i, &s) in sup_chi.iter().enumerate().rev() {
        if s > tol {
            break;
        }
        first = Some(times[i]);
    }
    first
}

/// [`detect_sliding`] on a trajectory's per-step diagnostics.
pub fn detect_sliding_in(traj: &Trajectory, tol: f64) -> Option<f64> {
    detect_sliding(&traj.diagnostics.times(), &traj.diagnostics.sup_chi(), tol)
}

/// `M_meas = max_t ‖G_ε(t)‖∞ + β*`, `β* = max_t ‖β⁰(φ*(t))‖∞` over the
/// snapshot times. Rows without a drift value (the initial row) are skipped.
pub fn measure_comparison_drift(traj: &Trajectory, data: &ProblemData) -> Result<f64> {
    let g_max = traj
        .diagnostics
        .rows
        .iter()
        .map(|r| r.sup_g_eps)
        .filter(|v| v.is_finite())
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
        .ok_or_else(|| Error::MissingData("no comparison-drift diagnostics in the trajectory".into()))?;
    Ok(g_max + target_beta_bound(traj, data)?)
}

/// `β* = max ‖β⁰(φ*(t))‖∞` sampled at the snapshot times.
pub fn target_beta_bound(traj: &Trajectory, data: &ProblemData) -> Result<f64> {
    let grid = data.grid();
    let mut best: f64 = 0.0;
    for s in &traj.snapshots {
        let target = data.target.sample(grid, s.t);
        for &v in target.values() {
            best = best.max(data.spec.beta0(v)?.abs());
        }
    }
    Ok(best)
}

/// Outcome of the comparison-bound check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonCheck {
    pub passed: bool,
    /// `max_t (sup|χ(t)| − w(t))`; nonpositive when the bound holds exactly.
    pub worst_margin: f64,
    pub tol_cmp: f64,
}

/// Checks `sup|χ(t)| ≤ w(t) + tol_cmp` at every sampled time, with
/// `w(t) = (w0 − (ρ−M)t/τ)⁺`. Fails with a parameter error if `ρ ≤ M`.
pub fn check_comparison_bound(
    times: &[f64],
    sup_chi: &[f64],
    w0: f64,
    m: f64,
    rho: f64,
    tau: f64,
    tol_cmp: f64,
) -> Result<ComparisonCheck> {
    let mut worst = f64::NEG_INFINITY;
    for (&t, &s) in times.iter().zip(sup_chi) {
        let w = ode_w_closed_form(w0, m, rho, tau, t)?;
        worst = worst.max(s - w);
    }
    if times.is_empty() {
        ode_w_closed_form(w0, m, rho, tau, 0.0)?;
        worst = 0.0;
    }
    Ok(ComparisonCheck { passed: worst <= tol_cmp, worst_margin: worst, tol_cmp })
}

/// Default comparison tolerance `5 (dt + ε)`.
pub fn default_tol_cmp(dt: f64, eps: f64) -> f64 {
    5.0 * (dt + eps)
}

/// Default sliding tolerance `10 ε (1 + M/ρ)`.
pub fn default_tol_slide(eps: f64, m: f64, rho: f64) -> f64 {
    10.0 * eps * (1.0 + m / rho)
}

/// Trapezoidal `(∫ f(t)² dt)^{1/2}` from samples.
pub(crate) fn l2_in_time(times: &[f64], values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 1..times.len() {
        acc += 0.5 * (times[i] - times[i - 1]) * (values[i] * values[i] + values[i - 1] * values[i - 1]);
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sliding_detection_examples() {
        let t = [0.0, 0.1, 0.2, 0.3];
        assert_eq!(detect_sliding(&t, &[0.0; 4], 1e-3), Some(0.0));
        assert_eq!(detect_sliding(&t, &[1.0, 0.5, 0.4, 0.3], 0.1), None);
        assert_eq!(detect_sliding(&t, &[1.0, 0.05, 0.2, 0.01], 0.1), Some(0.3));
        assert_eq!(detect_sliding(&t, &[1.0, 0.05, 0.02, 0.01], 0.1), Some(0.1));
    }

    #[test]
    fn comparison_examples() {
        let t = [0.0, 0.25, 0.5, 1.0];
        let ok = check_comparison_bound(&t, &[2.0, 1.0, 0.0, 0.0], 2.0, 1.0, 5.0, 1.0, 1e-9).unwrap();
        assert!(ok.passed && ok.worst_margin.abs() < 1e-15);
        let bad = check_comparison_bound(&t, &[2.0, 1.2, 0.0, 0.0], 2.0, 1.0, 5.0, 1.0, 0.1).unwrap();
        assert!(!bad.passed && (bad.worst_margin - 0.2).abs() < 1e-12);
        assert!(matches!(check_comparison_bound(&t, &[0.0; 4], 0.0, 5.0, 5.0, 1.0, 0.1), Err(Error::Param(_))));
    }

    #[test]
    fn trapezoid_in_time() {
        let t: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let v = vec![2.0; t.len()];
        assert!((l2_in_time(&t, &v) - 2.0).abs() < 1e-14);
    }
}
