use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use chsmc_core::analysis::{
    check_mass_conservation, contdep_experiment, sliding_experiment, yosida_convergence_study, SlidingReport,
};
use chsmc_core::grid::{write_csv, write_snapshot};
use chsmc_core::smc::{design_parameters, ode_w_closed_form, ode_weps_integrate, sliding_time};
use chsmc_core::solver::{run, Trajectory};
use chsmc_core::BoundaryKind;

use crate::config::{Check, PerturbationKind, RunConfig, Setup};
use crate::{CliError, Outcome};

type Result<T> = std::result::Result<T, CliError>;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_trajectory(traj: &Trajectory, out: &Path) -> Result<()> {
    let mut diag = create(out, "diagnostics.csv")?;
    traj.diagnostics.write_csv(&mut diag)?;
    diag.flush()?;
    let snaps = out.join("snapshots");
    for (i, s) in traj.snapshots.iter().enumerate() {
        let mut f = create(&snaps, &format!("phi_{:05}.bin", i))?;
        write_snapshot(&mut f, &s.phi, s.t)?;
        f.flush()?;
    }
    let mut last = create(out, "final_phi.csv")?;
    write_csv(&mut last, &traj.final_state().phi)?;
    last.flush()?;
    Ok(())
}

/// Runs the configured problem and writes diagnostics and snapshots.
pub fn simulate(cfg: &RunConfig, out: &Path, msg: &mut dyn Write) -> Result<Outcome> {
    let setup = cfg.build()?;
    let traj = run(&setup.data, &setup.solver)?;
    write_trajectory(&traj, out)?;
    let last = traj.diagnostics.rows.last().expect("diagnostics hold the initial row");
    writeln!(
        msg,
        "simulated to t = {} in {} steps; {} snapshots written to {}",
        last.t,
        traj.diagnostics.rows.len() - 1,
        traj.snapshots.len(),
        out.display()
    )?;
    Ok(Outcome::Ok)
}

fn sliding_report(cfg: &RunConfig, setup: &Setup) -> Result<SlidingReport> {
    if setup.data.regime() != BoundaryKind::Dirichlet {
        return Err(chsmc_core::Error::Regime("sliding checks need Dirichlet conditions for mu".into()).into());
    }
    Ok(sliding_experiment(&setup.data, &setup.solver, &cfg.sliding_settings(setup.output_every))?)
}

fn sliding_pass(cfg: &RunConfig, rep: &SlidingReport) -> bool {
    let bound_ok = rep.w0 == 0.0 || rep.within_bound(cfg.experiment.bound_factor);
    rep.passed() && bound_ok
}

/// Calibrate, design, run and verify sliding; passes iff sliding is
/// achieved within the bound and the comparison bound holds.
pub fn sliding_check(cfg: &RunConfig, out: &Path, msg: &mut dyn Write) -> Result<Outcome> {
    let setup = cfg.build()?;
    let rep = sliding_report(cfg, &setup)?;
    rep.write_csv(create(out, "sliding.csv")?)?;
    rep.write_summary(create(out, "sliding.txt")?)?;
    rep.write_summary(&mut *msg)?;
    Ok(Outcome::from_pass(sliding_pass(cfg, &rep)))
}

/// Continuous-dependence sweep from `[experiment.contdep]`.
pub fn contdep(cfg: &RunConfig, out: &Path, msg: &mut dyn Write) -> Result<Outcome> {
    let setup = cfg.build()?;
    let (pass, text) = contdep_inner(cfg, &setup, out)?;
    msg.write_all(text.as_bytes())?;
    Ok(Outcome::from_pass(pass))
}

fn contdep_inner(cfg: &RunConfig, setup: &Setup, out: &Path) -> Result<(bool, String)> {
    let grid = *setup.data.grid();
    let (pert, section) = cfg
        .perturbation(&grid)?
        .ok_or_else(|| CliError::Config("experiment.contdep: section missing".into()))?;
    let rep = contdep_experiment(&setup.data, &setup.solver, &pert, &section.deltas)?;
    rep.write_csv(create(out, "contdep.csv")?)?;
    let mut text = Vec::new();
    rep.write_summary(&mut text)?;
    let finite = rep.rows.iter().all(|r| r.ratio.is_finite());
    let pass = finite
        && match section.perturbation {
            PerturbationKind::Target => rep.bounded_by_largest(),
            _ => rep.spread() < section.max_spread,
        };
    let text = String::from_utf8(text).expect("summary is UTF-8");
    fs::write(out.join("contdep.txt"), &text)?;
    Ok((pass, text))
}

/// Parameters of the comparison ODE table.
#[derive(Debug, Clone, Copy)]
pub struct OdeParams {
    pub w0: f64,
    pub m: f64,
    pub rho: f64,
    pub tau: f64,
    pub eps: f64,
    pub dt: f64,
    pub horizon: Option<f64>,
}

/// Prints `T*` and the closed form next to the regularized integration.
pub fn ode_oracle(p: &OdeParams, msg: &mut dyn Write) -> Result<Outcome> {
    let tstar = sliding_time(p.w0, p.m, p.rho, p.tau)?;
    let horizon = p.horizon.unwrap_or(if tstar > 0.0 { 2.0 * tstar } else { 1.0 });
    let series = ode_weps_integrate(p.eps, p.m, p.rho, p.tau, p.w0, p.dt, horizon)?;
    writeln!(msg, "T* = {}", tstar)?;
    writeln!(msg, "{:>12} {:>16} {:>16} {:>12}", "t", "w", "w_eps", "|diff|")?;
    for (&t, &we) in series.t.iter().zip(&series.w) {
        let w = ode_w_closed_form(p.w0, p.m, p.rho, p.tau, t)?;
        writeln!(msg, "{:>12.6} {:>16.10} {:>16.10} {:>12.3e}", t, w, we, (w - we).abs())?;
    }
    Ok(Outcome::Ok)
}

#[derive(Debug, Clone, Copy)]
pub struct DesignParams {
    pub chat: f64,
    pub cstr: f64,
    pub betastar: f64,
    pub tau: f64,
    pub w0: f64,
    pub horizon: f64,
    pub vol: f64,
    pub rho: Option<f64>,
}

/// Prints the volume threshold and threshold gain; with `rho`, also the
/// drift and sliding time of that gain.
pub fn design_rho(p: &DesignParams, msg: &mut dyn Write) -> Result<Outcome> {
    let d = design_parameters(p.chat, p.cstr, p.betastar, p.tau, p.w0, p.horizon, p.vol)?;
    writeln!(msg, "delta* = {}", d.deltastar)?;
    writeln!(msg, "volume factor = {}", d.volume_factor())?;
    writeln!(msg, "rho* = {}", d.rhostar)?;
    if let Some(rho) = p.rho {
        let g = d.select_gain(rho)?;
        writeln!(msg, "rho = {}: M = {}, T* = {}", g.rho, g.drift, g.tstar)?;
    }
    Ok(Outcome::Ok)
}

/// Checks run by `verify-all` when the configuration lists none.
fn default_checks(cfg: &RunConfig, setup: &Setup) -> Vec<Check> {
    let mut checks = Vec::new();
    match setup.data.regime() {
        BoundaryKind::Neumann => {
            checks.push(Check::Mass);
            if cfg.control.rho == 0.0 && cfg.data.g.is_none() {
                checks.push(Check::Energy);
            }
        }
        BoundaryKind::Dirichlet => {
            if cfg.data.target.is_some() {
                checks.push(Check::Sliding);
            }
        }
    }
    if cfg.experiment.contdep.is_some() {
        checks.push(Check::Contdep);
    }
    if cfg.experiment.yosida_eps.is_some() {
        checks.push(Check::Yosida);
    }
    checks
}

/// Runs every requested (or applicable) check and aggregates the verdicts.
pub fn verify_all(cfg: &RunConfig, out: &Path, msg: &mut dyn Write) -> Result<Outcome> {
    let setup = cfg.build()?;
    let checks = if cfg.experiment.checks.is_empty() { default_checks(cfg, &setup) } else { cfg.experiment.checks.clone() };
    let mut lines = Vec::new();
    let mut all = true;
    let mut base: Option<Trajectory> = None;
    for check in checks {
        let (pass, detail) = match check {
            Check::Mass => {
                let traj = match &base {
                    Some(t) => t,
                    None => base.insert(run(&setup.data, &setup.solver)?),
                };
                let m = check_mass_conservation(traj)?;
                (m.passed, format!("max drift {:.3e} (tolerance {:.3e})", m.max_drift, m.tolerance))
            }
            Check::Energy => {
                if cfg.control.rho != 0.0 || cfg.data.g.is_some() {
                    return Err(CliError::Config("experiment.checks: energy needs rho = 0 and no forcing".into()));
                }
                let traj = match &base {
                    Some(t) => t,
                    None => base.insert(run(&setup.data, &setup.solver)?),
                };
                let worst = traj
                    .diagnostics
                    .rows
                    .windows(2)
                    .map(|w| (w[1].free_energy_reg + w[1].dissipation) - (w[0].free_energy_reg + w[0].dissipation))
                    .fold(f64::NEG_INFINITY, f64::max);
                (worst <= cfg.experiment.energy_tol, format!("largest increase {:.3e}", worst))
            }
            Check::Sliding => {
                let rep = sliding_report(cfg, &setup)?;
                rep.write_csv(create(out, "sliding.csv")?)?;
                rep.write_summary(create(out, "sliding.txt")?)?;
                (
                    sliding_pass(cfg, &rep),
                    format!("T* observed {:?}, bound {:.4}, verdict {}", rep.tstar_observed, rep.tstar_bound, rep.verdict()),
                )
            }
            Check::Contdep => {
                let (pass, _) = contdep_inner(cfg, &setup, out)?;
                (pass, "see contdep.txt".to_string())
            }
            Check::Yosida => {
                let eps = cfg.experiment.yosida_eps.as_deref().unwrap_or_default();
                let study = yosida_convergence_study(&setup.data, &setup.solver, eps)?;
                study.write_csv(create(out, "yosida.csv")?)?;
                (
                    study.distances_strictly_decrease(),
                    format!("distances {:?}, overshoot {:?}", study.distances, study.overshoot),
                )
            }
        };
        all &= pass;
        lines.push(format!("[{}] {:?}: {}", if pass { "PASS" } else { "FAIL" }, check, detail));
    }
    let text = lines.join("\n") + "\n";
    fs::create_dir_all(out)?;
    fs::write(out.join("verify.txt"), &text)?;
    msg.write_all(text.as_bytes())?;
    Ok(Outcome::from_pass(all))
}
