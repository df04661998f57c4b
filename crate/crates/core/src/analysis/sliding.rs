use std::io::Write;

use super::{
    check_comparison_bound, default_tol_cmp, default_tol_slide, detect_sliding_in, measure_comparison_drift,
    ComparisonCheck,
};
use crate::error::{Error, Result};
use crate::grid::BoundaryKind;
use crate::smc::{sliding_time, SmcParams};
use crate::solver::{run, ProblemData, SolverConfig};

/// Knobs of the calibrate, design, run pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct SlidingSettings {
    /// `ρ = gain_factor · (M_cal + τ w0 / T) · rho_multiplier` unless
    /// `rho_override` is set.
    pub gain_factor: f64,
    pub rho_multiplier: f64,
    pub rho_override: Option<f64>,
    /// Gain used in the calibration run.
    pub calibration_rho: f64,
    /// Snapshot spacing of the main run; must divide `T`.
    pub output_every: f64,
    /// The main-run step satisfies `dt · ρ ≤ dt_safety · τ ε` so that the
    /// explicitly treated control does not chatter.
    pub dt_safety: f64,
    /// Rerun without control and report whether sliding still occurs.
    pub ablation: bool,
}

impl Default for SlidingSettings {
    fn default() -> Self {
        SlidingSettings {
            gain_factor: 2.0,
            rho_multiplier: 1.0,
            rho_override: None,
            calibration_rho: 0.0,
            output_every: 0.01,
            dt_safety: 0.5,
            ablation: true,
        }
    }
}

/// Outcome of one sliding experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SlidingReport {
    pub rho: f64,
    pub eps: f64,
    pub tau: f64,
    pub horizon: f64,
    /// `‖φ0 − φ*(0)‖∞`.
    pub w0: f64,
    /// Drift measured in the calibration run.
    pub m_calibration: f64,
    /// `max(M_cal, M_main)`, used for the bound and the tolerances.
    pub m_meas: f64,
    /// `τ w0 / (ρ − M)`, infinite when `ρ ≤ M`.
    pub tstar_bound: f64,
    pub tstar_observed: Option<f64>,
    pub tol_slide: f64,
    pub dt_main: f64,
    /// `None` when `ρ ≤ M` so the bound is undefined.
    pub comparison: Option<ComparisonCheck>,
    /// Sliding time of the uncontrolled rerun at the same tolerance.
    pub ablation: Option<Option<f64>>,
}

impl SlidingReport {
    /// Sliding observed within the horizon.
    pub fn achieved(&self) -> bool {
        self.tstar_observed.is_some_and(|t| t <= self.horizon)
    }

    /// `T*_obs ≤ factor · T*_bound`.
    pub fn within_bound(&self, factor: f64) -> bool {
        self.tstar_observed.is_some_and(|t| t <= factor * self.tstar_bound)
    }

    pub fn comparison_holds(&self) -> bool {
        self.comparison.is_some_and(|c| c.passed)
    }

    /// Sliding achieved and the comparison bound holds.
    pub fn passed(&self) -> bool {
        self.achieved() && self.comparison_holds()
    }

    pub fn verdict(&self) -> &'static str {
        if self.achieved() {
            "achieved"
        } else {
            "not achieved"
        }
    }

    pub const CSV_HEADER: &'static str = "rho,eps,w0,M_cal,M_meas,Tstar_bound,Tstar_observed,tol_slide,dt,\
comparison_margin,comparison_tol,verdict,ablation_Tstar";

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |t| format!("{:e}", t));
        writeln!(w, "{}", Self::CSV_HEADER)?;
        writeln!(
            w,
            "{:e},{:e},{:e},{:e},{:e},{:e},{},{:e},{:e},{},{},{},{}",
            self.rho,
            self.eps,
            self.w0,
            self.m_calibration,
            self.m_meas,
            self.tstar_bound,
            opt(self.tstar_observed),
            self.tol_slide,
            self.dt_main,
            opt(self.comparison.map(|c| c.worst_margin)),
            opt(self.comparison.map(|c| c.tol_cmp)),
            self.verdict().replace(' ', "_"),
            match self.ablation {
                None => "skipped".to_string(),
                Some(t) => opt(t),
            }
        )?;
        Ok(())
    }

    pub fn write_summary<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "sliding experiment")?;
        writeln!(w, "  rho            {:.6}", self.rho)?;
        writeln!(w, "  eps            {:.3e}", self.eps)?;
        writeln!(w, "  w0             {:.6}", self.w0)?;
        writeln!(w, "  M (calibrated) {:.6}", self.m_calibration)?;
        writeln!(w, "  M (used)       {:.6}", self.m_meas)?;
        writeln!(w, "  T* bound       {:.6}", self.tstar_bound)?;
        match self.tstar_observed {
            Some(t) => writeln!(w, "  T* observed    {:.6}", t)?,
            None => writeln!(w, "  T* observed    none")?,
        }
        writeln!(w, "  tol_slide      {:.3e}", self.tol_slide)?;
        writeln!(w, "  dt             {:.3e}", self.dt_main)?;
        match self.comparison {
            Some(c) => writeln!(
                w,
                "  comparison     {} (worst margin {:.3e}, tol {:.3e})",
                if c.passed { "holds" } else { "violated" },
                c.worst_margin,
                c.tol_cmp
            )?,
            None => writeln!(w, "  comparison     undefined (rho <= M)")?,
        }
        if let Some(ab) = self.ablation {
            writeln!(
                w,
                "  without control: {}",
                ab.map_or_else(|| "no sliding".to_string(), |t| format!("sliding from t = {:.6}", t))
            )?;
        }
        writeln!(w, "  verdict        {}", self.verdict())?;
        writeln!(w, "  note: M is measured, not the a priori structural bound")?;
        Ok(())
    }
}

/// Calibrates `M` without control, picks `ρ` from `ρ > M + τ w0 / T`, runs
/// the controlled problem and checks sliding plus the comparison bound.
///
/// `cfg` fixes `ε`, the scheme, `T` and the calibration step; the main run
/// uses the same `ε` for the Yosida and sign regularizations.
pub fn sliding_experiment(data: &ProblemData, cfg: &SolverConfig, settings: &SlidingSettings) -> Result<SlidingReport> {
    if data.regime() != BoundaryKind::Dirichlet {
        return Err(Error::Regime("sliding experiments need Dirichlet conditions for mu".into()));
    }
    if data.target.dt.is_none() || data.target.laplacian.is_none() {
        return Err(Error::MissingData("the target needs its time derivative and Laplacian".into()));
    }
    if !(settings.output_every > 0.0) || !(settings.dt_safety > 0.0) || !(cfg.t_final > 0.0) {
        return Err(Error::Param("need output_every > 0, dt_safety > 0 and T > 0".into()));
    }
    let eps = cfg.eps;
    let tau = data.tau;
    let horizon = cfg.t_final;
    let grid = data.grid();
    let w0 = data.phi0.sub(&data.target.sample(grid, 0.0)).linf_norm();

    let every_cfg = |dt: f64| -> Result<SolverConfig> {
        let mut c = cfg.clone();
        c.dt = dt;
        Ok(c.with_output_every(settings.output_every))
    };

    let cal_data = data.clone().with_control(SmcParams::new(settings.calibration_rho, eps)?);
    let cal = run(&cal_data, &every_cfg(cfg.dt)?)?;
    let m_cal = measure_comparison_drift(&cal, &cal_data)?;

    let rho = match settings.rho_override {
        Some(r) => r,
        None => settings.gain_factor * (m_cal + tau * w0 / horizon) * settings.rho_multiplier,
    };
    let dt_main = if rho > 0.0 {
        let cap = settings.dt_safety * tau * eps / rho;
        let k = (settings.output_every / cap.min(cfg.dt)).ceil().max(1.0);
        settings.output_every / k
    } else {
        cfg.dt
    };
    log::info!("sliding: M_cal = {:.6}, w0 = {:.6}, rho = {:.6}, dt = {:.3e}", m_cal, w0, rho, dt_main);

    let main_data = data.clone().with_control(SmcParams::new(rho, eps)?);
    let main = run(&main_data, &every_cfg(dt_main)?)?;
    let m_meas = m_cal.max(measure_comparison_drift(&main, &main_data)?);

    let tol_slide = if rho > 0.0 { default_tol_slide(eps, m_meas, rho) } else { 10.0 * eps };
    let tstar_observed = detect_sliding_in(&main, tol_slide);
    let (tstar_bound, comparison) = if rho > m_meas {
        let times = main.diagnostics.times();
        let sup = main.diagnostics.sup_chi();
        (
            sliding_time(w0, m_meas, rho, tau)?,
            Some(check_comparison_bound(&times, &sup, w0, m_meas, rho, tau, default_tol_cmp(dt_main, eps))?),
        )
    } else {
        (f64::INFINITY, None)
    };

    let ablation = if !settings.ablation {
        None
    } else if settings.calibration_rho == 0.0 {
        Some(detect_sliding_in(&cal, tol_slide))
    } else {
        let off = data.clone().with_control(SmcParams::off(eps));
        Some(detect_sliding_in(&run(&off, &every_cfg(cfg.dt)?)?, tol_slide))
    };

    Ok(SlidingReport {
        rho,
        eps,
        tau,
        horizon,
        w0,
        m_calibration: m_cal,
        m_meas,
        tstar_bound,
        tstar_observed,
        tol_slide,
        dt_main,
        comparison,
        ablation,
    })
}
