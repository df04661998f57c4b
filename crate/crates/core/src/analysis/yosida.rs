use std::io::Write;

use rayon::prelude::*;

use super::l2_in_time;
use crate::error::{Error, Result};
use crate::smc::SmcParams;
use crate::solver::{run, ProblemData, SolverConfig, Trajectory};

/// Pairwise distances of `φ_ε` along a decreasing `ε` list.
#[derive(Debug, Clone, PartialEq)]
pub struct YosidaStudy {
    pub eps: Vec<f64>,
    /// `‖φ_{ε_k} − φ_{ε_{k+1}}‖` in discrete `L²(Q)`; one shorter than `eps`.
    pub distances: Vec<f64>,
    /// Largest excursion of `φ_ε` outside the potential's domain, per `ε`.
    pub overshoot: Vec<f64>,
}

impl YosidaStudy {
    pub fn distances_strictly_decrease(&self) -> bool {
        self.distances.windows(2).all(|w| w[1] < w[0])
    }

    pub fn overshoot_decreases(&self) -> bool {
        self.overshoot.windows(2).all(|w| w[1] <= w[0])
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "eps,overshoot,distance_to_next")?;
        for (k, e) in self.eps.iter().enumerate() {
            let d = self.distances.get(k).map_or_else(|| "none".to_string(), |d| format!("{:e}", d));
            writeln!(w, "{:e},{:e},{}", e, self.overshoot[k], d)?;
        }
        Ok(())
    }
}

fn distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.snapshots.len() != b.snapshots.len() {
        return Err(Error::Grid("runs recorded different snapshot sets".into()));
    }
    let times: Vec<f64> = a.snapshots.iter().map(|s| s.t).collect();
    let d: Vec<f64> = a.snapshots.iter().zip(&b.snapshots).map(|(x, y)| x.phi.sub(&y.phi).l2_norm()).collect();
    Ok(l2_in_time(&times, &d))
}

/// Reruns `data` for every `ε` in `eps_list`, all else fixed. The sign
/// regularization follows the same `ε` when the control is active. The
/// space-time norm integrates over `cfg`'s snapshot times.
pub fn yosida_convergence_study(data: &ProblemData, cfg: &SolverConfig, eps_list: &[f64]) -> Result<YosidaStudy> {
    if eps_list.iter().any(|e| !(*e > 0.0)) || eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Param("eps list must be positive and strictly decreasing".into()));
    }
    let runs = eps_list
        .par_iter()
        .map(|&eps| {
            let mut c = cfg.clone();
            c.eps = eps;
            let d = data.clone().with_control(SmcParams::new(data.smc.rho, eps)?);
            run(&d, &c)
        })
        .collect::<Result<Vec<_>>>()?;
    let distances = runs.windows(2).map(|w| distance(&w[0], &w[1])).collect::<Result<Vec<_>>>()?;
    let overshoot = runs
        .iter()
        .map(|t| t.diagnostics.rows.iter().map(|r| r.overshoot).fold(0.0, f64::max))
        .collect();
    Ok(YosidaStudy { eps: eps_list.to_vec(), distances, overshoot })
}
