use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use super::l2_in_time;
use crate::error::{Error, Result};
use crate::grid::{BoundaryKind, Field, SpaceTimeFn};
use crate::solver::{run, ProblemData, SolverConfig, TargetProfile, Trajectory};

/// Direction of a data perturbation; run 2 uses `base + δ · direction`.
#[derive(Clone)]
pub enum Perturbation {
    Forcing(SpaceTimeFn),
    /// Must be mean-free in the Neumann regime.
    Initial(Field),
    Target(SpaceTimeFn),
}

impl Perturbation {
    pub fn name(&self) -> &'static str {
        match self {
            Perturbation::Forcing(_) => "forcing",
            Perturbation::Initial(_) => "initial",
            Perturbation::Target(_) => "target",
        }
    }
}

impl std::fmt::Debug for Perturbation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Perturbation::{}", self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContdepRow {
    pub delta: f64,
    /// `max_t ‖φ1 − φ2‖ + (∫ ‖φ1 − φ2‖²_V dt)^{1/2}`.
    pub lhs: f64,
    /// `‖g1 − g2‖_{L²(H)}`.
    pub rhs_forcing: f64,
    /// `‖φ0,1 − φ0,2‖_H`.
    pub rhs_initial: f64,
    /// `‖φ*1 − φ*2‖^{1/2}_{L²(H)}`.
    pub rhs_target: f64,
    /// `lhs / rhs`, or 0 when both vanish.
    pub ratio: f64,
}

impl ContdepRow {
    pub fn rhs(&self) -> f64 {
        self.rhs_forcing + self.rhs_initial + self.rhs_target
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContdepReport {
    pub kind: &'static str,
    pub rows: Vec<ContdepRow>,
}

impl ContdepReport {
    /// Largest ratio over the sweep; the empirical dependence constant.
    pub fn fitted_c(&self) -> f64 {
        self.rows.iter().map(|r| r.ratio).fold(0.0, f64::max)
    }

    /// `max/min` of the ratios over rows with `δ > 0`.
    pub fn spread(&self) -> f64 {
        let (lo, hi) = self
            .rows
            .iter()
            .filter(|r| r.delta > 0.0)
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r.ratio), hi.max(r.ratio)));
        if hi == 0.0 {
            1.0
        } else {
            hi / lo
        }
    }

    /// Ratio at the largest `δ`, used as the constant for the rest of the
    /// sweep.
    pub fn constant_from_largest(&self) -> f64 {
        self.rows
            .iter()
            .max_by(|a, b| a.delta.total_cmp(&b.delta))
            .map_or(0.0, |r| r.ratio)
    }

    /// Every row satisfies `lhs ≤ C · rhs` with `C` fitted at the largest `δ`.
    pub fn bounded_by_largest(&self) -> bool {
        let c = self.constant_from_largest();
        self.rows.iter().all(|r| r.lhs <= c * r.rhs() * (1.0 + 1e-12))
    }

    pub const CSV_HEADER: &'static str = "delta,lhs,rhs_forcing,rhs_initial,rhs_target,ratio";

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(
                w,
                "{:e},{:e},{:e},{:e},{:e},{:e}",
                r.delta, r.lhs, r.rhs_forcing, r.rhs_initial, r.rhs_target, r.ratio
            )?;
        }
        Ok(())
    }

    pub fn write_summary<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "continuous dependence, {} perturbation", self.kind)?;
        for r in &self.rows {
            writeln!(w, "  delta {:.1e}  lhs {:.4e}  rhs {:.4e}  ratio {:.4e}", r.delta, r.lhs, r.rhs(), r.ratio)?;
        }
        writeln!(w, "  fitted C {:.4e}, spread {:.3}", self.fitted_c(), self.spread())?;
        Ok(())
    }
}

fn perturbed(base: &ProblemData, p: &Perturbation, delta: f64) -> Result<ProblemData> {
    let mut d = base.clone();
    match p {
        Perturbation::Forcing(dir) => {
            let g = base.g.0.clone();
            let dir = dir.clone();
            d.g.0 = Arc::new(move |x, t| g(x, t) + delta * dir(x, t));
        }
        Perturbation::Initial(dir) => {
            d.phi0 = base.phi0.add(&dir.scale(delta));
        }
        Perturbation::Target(dir) => {
            let v = base.target.value.clone();
            let dir = dir.clone();
            d.target = TargetProfile::new(Arc::new(move |x, t| v(x, t) + delta * dir(x, t)));
        }
    }
    Ok(d)
}

/// `(max_t ‖d‖_H, (∫‖d‖²_V)^{1/2})` over the common snapshots.
fn lhs(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.snapshots.len() != b.snapshots.len() {
        return Err(Error::Grid("paired runs recorded different snapshot sets".into()));
    }
    let mut sup: f64 = 0.0;
    let mut times = Vec::with_capacity(a.snapshots.len());
    let mut v = Vec::with_capacity(a.snapshots.len());
    for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
        let d = sa.phi.sub(&sb.phi);
        let (l2, h1, _) = d.norms();
        sup = sup.max(l2);
        times.push(sa.t);
        v.push((l2 * l2 + h1 * h1).sqrt());
    }
    Ok(sup + l2_in_time(&times, &v))
}

/// Runs `base` against `base + δ · direction` for every `δ` and compares
/// the two sides of the continuous-dependence inequality. Paired runs are
/// independent and execute in parallel; rows keep the order of `deltas`.
pub fn contdep_experiment(
    base: &ProblemData,
    cfg: &SolverConfig,
    perturbation: &Perturbation,
    deltas: &[f64],
) -> Result<ContdepReport> {
    if deltas.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
        return Err(Error::Param("perturbation sizes must be finite and nonnegative".into()));
    }
    let grid = base.grid();
    if let Perturbation::Initial(dir) = perturbation {
        if dir.grid() != grid {
            return Err(Error::Grid("initial perturbation lives on a different grid".into()));
        }
        if base.regime() == BoundaryKind::Neumann {
            let tolerance = 1e-12 * (1.0 + dir.linf_norm());
            let mean = dir.mean();
            if mean.abs() > tolerance {
                return Err(Error::Mean { mean, tolerance });
            }
        }
    }
    let reference = run(base, cfg)?;
    let times: Vec<f64> = reference.snapshots.iter().map(|s| s.t).collect();
    // Unit-size norms of the direction; the rhs scales linearly in δ.
    let dir_norm = |f: &SpaceTimeFn| {
        let vals: Vec<f64> = times.iter().map(|&t| Field::from_fn(grid, |x| f(x, t)).l2_norm()).collect();
        l2_in_time(&times, &vals)
    };
    let (unit_g, unit_0, unit_star) = match perturbation {
        Perturbation::Forcing(f) => (dir_norm(f), 0.0, 0.0),
        Perturbation::Initial(f) => (0.0, f.l2_norm(), 0.0),
        Perturbation::Target(f) => (0.0, 0.0, dir_norm(f)),
    };

    let rows = deltas
        .par_iter()
        .map(|&delta| -> Result<ContdepRow> {
            let other = if delta == 0.0 { reference.clone() } else { run(&perturbed(base, perturbation, delta)?, cfg)? };
            let l = lhs(&reference, &other)?;
            let (rg, r0, rs) = (delta * unit_g, delta * unit_0, (delta * unit_star).sqrt());
            let rhs = rg + r0 + rs;
            let ratio = if rhs > 0.0 {
                l / rhs
            } else if l == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            Ok(ContdepRow { delta, lhs: l, rhs_forcing: rg, rhs_initial: r0, rhs_target: rs, ratio })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ContdepReport { kind: perturbation.name(), rows })
}
