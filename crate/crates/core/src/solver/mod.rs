//! Time integration of the Yosida-regularized controlled system.
//!
//! Three schemes share one semi-implicit splitting: `β_ε` implicit, `π` and
//! the control term explicit. Each backward-Euler step is a nonlinear system
//! with a symmetric positive definite Jacobian, solved by Newton iteration
//! with a preconditioned CG inner solve.

mod newton;
mod ops;
mod steppers;

use std::io::Write;
use std::sync::Arc;

use log::warn;

use crate::error::{Error, Result};
use crate::grid::{
    harmonic_extension, neumann_eigenbasis, BoundaryKind, Field, Grid, MuBoundaryCondition, NeumannEigenbasis,
    SpaceTimeFn,
};
use crate::potentials::{free_energy_reg, PotentialSpec};
use crate::smc::SmcParams;

use newton::NewtonSettings;
use ops::Ops;
use steppers::{attach_time, Explicit};

/// Target profile `φ*` with optional time derivative and Laplacian, which
/// are needed for the comparison drift.
#[derive(Clone)]
pub struct TargetProfile {
    pub value: SpaceTimeFn,
    pub dt: Option<SpaceTimeFn>,
    pub laplacian: Option<SpaceTimeFn>,
}

impl TargetProfile {
    pub fn new(value: SpaceTimeFn) -> Self {
        TargetProfile { value, dt: None, laplacian: None }
    }

    pub fn with_derivatives(value: SpaceTimeFn, dt: SpaceTimeFn, laplacian: SpaceTimeFn) -> Self {
        TargetProfile { value, dt: Some(dt), laplacian: Some(laplacian) }
    }

    /// Constant target; both derivatives vanish.
    pub fn constant(c: f64) -> Self {
        Self::with_derivatives(Arc::new(move |_, _| c), Arc::new(|_, _| 0.0), Arc::new(|_, _| 0.0))
    }

    pub fn sample(&self, grid: &Grid, t: f64) -> Field {
        sample(grid, &self.value, t)
    }
}

impl std::fmt::Debug for TargetProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TargetProfile")
            .field("dt", &self.dt.is_some())
            .field("laplacian", &self.laplacian.is_some())
            .finish()
    }
}

pub(crate) fn sample(grid: &Grid, f: &SpaceTimeFn, t: f64) -> Field {
    Field::from_fn(grid, |x| f(x, t))
}

/// Data of one controlled problem. In the Dirichlet regime `g` is the
/// physical forcing; the reduced forcing `g + μ_H` is assembled internally.
#[derive(Clone, Debug)]
pub struct ProblemData {
    pub g: ForcingFn,
    pub phi0: Field,
    pub target: TargetProfile,
    pub bc: MuBoundaryCondition,
    pub spec: PotentialSpec,
    pub tau: f64,
    pub smc: SmcParams,
}

/// Wrapper giving forcing closures a `Debug` impl.
#[derive(Clone)]
pub struct ForcingFn(pub SpaceTimeFn);

impl std::fmt::Debug for ForcingFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ForcingFn(..)")
    }
}

impl ForcingFn {
    pub fn zero() -> Self {
        ForcingFn(Arc::new(|_, _| 0.0))
    }

    pub fn eval(&self, x: &crate::grid::Point, t: f64) -> f64 {
        (self.0)(x, t)
    }
}

impl ProblemData {
    /// Uncontrolled problem with zero forcing and target `φ* ≡ 0`.
    pub fn new(phi0: Field, spec: PotentialSpec, bc: MuBoundaryCondition, tau: f64) -> Self {
        ProblemData {
            g: ForcingFn::zero(),
            phi0,
            target: TargetProfile::constant(0.0),
            bc,
            spec,
            tau,
            smc: SmcParams::off(1.0),
        }
    }

    pub fn with_forcing(mut self, g: SpaceTimeFn) -> Self {
        self.g = ForcingFn(g);
        self
    }

    pub fn with_target(mut self, target: TargetProfile) -> Self {
        self.target = target;
        self
    }

    pub fn with_control(mut self, smc: SmcParams) -> Self {
        self.smc = smc;
        self
    }

    pub fn grid(&self) -> &Grid {
        self.phi0.grid()
    }

    pub fn regime(&self) -> BoundaryKind {
        self.bc.kind()
    }

    /// Checks `τ > 0`, `φ0 ∈ closure D(β)` and, for Neumann, interiority of
    /// the mean.
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Param(format!("tau must be positive, got {}", self.tau)));
        }
        let dom = self.spec.domain();
        let (lo, hi) = self.phi0.min_max();
        if (lo < dom.lo || hi > dom.hi) || (!dom.lo_closed && lo <= dom.lo) || (!dom.hi_closed && hi >= dom.hi) {
            let bad = if lo < dom.lo || (!dom.lo_closed && lo <= dom.lo) { lo } else { hi };
            return Err(Error::Domain { value: bad, domain: dom.to_string() });
        }
        if self.regime() == BoundaryKind::Neumann {
            let m = self.phi0.mean();
            if !dom.contains_interior(m) {
                return Err(Error::Domain { value: m, domain: format!("interior of {}", dom) });
            }
        }
        Ok(())
    }
}

/// Time-integration method for the regularized problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    CoupledNeumann,
    EliminatedDirichlet,
    GalerkinNeumann { modes: usize, integrator: GalerkinIntegrator },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GalerkinIntegrator {
    BackwardEuler,
    Rk4,
}

/// How the inverse Laplacians inside the steppers are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearBackend {
    /// Exact cosine/sine eigen-decomposition (default).
    Spectral,
    /// Diagonally preconditioned CG to relative tolerance `CG_RTOL`.
    Cg,
}

#[derive(Clone)]
pub struct SolverConfig {
    pub eps: f64,
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub mms_source: Option<SpaceTimeFn>,
    /// Snapshot times besides `t = 0`; each must be a multiple of `dt`.
    /// When empty, the final time is recorded.
    pub output_times: Vec<f64>,
    pub backend: LinearBackend,
    /// How many times a failed step may be split in half.
    pub max_halvings: usize,
}

impl std::fmt::Debug for SolverConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SolverConfig")
            .field("eps", &self.eps)
            .field("dt", &self.dt)
            .field("t_final", &self.t_final)
            .field("scheme", &self.scheme)
            .field("newton_tol", &self.newton_tol)
            .field("newton_max_iter", &self.newton_max_iter)
            .field("mms_source", &self.mms_source.is_some())
            .field("output_times", &self.output_times)
            .field("backend", &self.backend)
            .finish()
    }
}

impl SolverConfig {
    pub fn new(eps: f64, dt: f64, t_final: f64, scheme: Scheme) -> Result<Self> {
        if !(eps > 0.0) || !(dt > 0.0) || !(t_final >= 0.0) || !t_final.is_finite() {
            return Err(Error::Param(format!(
                "need eps > 0, dt > 0, T >= 0; got eps = {}, dt = {}, T = {}",
                eps, dt, t_final
            )));
        }
        Ok(SolverConfig {
            eps,
            dt,
            t_final,
            scheme,
            newton_tol: 1e-10,
            newton_max_iter: 50,
            mms_source: None,
            output_times: Vec::new(),
            backend: LinearBackend::Spectral,
            max_halvings: 6,
        })
    }

    pub fn with_output_times(mut self, times: Vec<f64>) -> Self {
        self.output_times = times;
        self
    }

    /// Output at every multiple of `every` up to the final time.
    pub fn with_output_every(mut self, every: f64) -> Self {
        let k = (self.t_final / every + 1e-9).floor() as usize;
        self.output_times = (1..=k).map(|i| i as f64 * every).collect();
        self
    }

    fn newton(&self) -> NewtonSettings {
        NewtonSettings { tol: self.newton_tol, max_iter: self.newton_max_iter }
    }

    fn n_steps(&self) -> Result<usize> {
        let n = (self.t_final / self.dt).round();
        if (n * self.dt - self.t_final).abs() > 1e-9 * self.t_final.max(self.dt) {
            return Err(Error::Param(format!("T = {} is not a multiple of dt = {}", self.t_final, self.dt)));
        }
        Ok(n as usize)
    }

    fn check_regime(&self, kind: BoundaryKind) -> Result<()> {
        let ok = match self.scheme {
            Scheme::CoupledNeumann | Scheme::GalerkinNeumann { .. } => kind == BoundaryKind::Neumann,
            Scheme::EliminatedDirichlet => kind == BoundaryKind::Dirichlet,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Regime(format!("scheme {:?} is incompatible with {:?} conditions for mu", self.scheme, kind)))
        }
    }
}

/// `(φ, μ, ξ, ζ)` at time `t`; `μ` is the physical chemical potential,
/// `ξ = β_ε(φ)` and `ζ = ρ sign_ε(φ − φ*)` as used in the step that produced
/// the state. At `t = 0`, `μ` is the quasi-static value with the viscous term
/// omitted.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSnapshot {
    pub t: f64,
    pub phi: Field,
    pub mu: Field,
    pub xi: Field,
    pub zeta: Field,
}

/// One diagnostics row per time step (plus the initial state).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub mean_phi: f64,
    pub free_energy_reg: f64,
    pub sup_chi: f64,
    /// `‖G_ε‖∞`; NaN when `∂tφ*`/`Δφ*` are missing and at `t = 0`.
    pub sup_g_eps: f64,
    /// Dual norm of the discrete time derivative.
    pub dual_norm_dphi: f64,
    pub newton_iters: usize,
    /// `L²` norm of the discrete time derivative.
    pub l2_dphi: f64,
    /// Largest distance of `φ` from the closure of `D(β)`.
    pub overshoot: f64,
    /// Cumulative `Σ dt (τ‖∂tφ‖² + ‖∂tφ‖²_*)`.
    pub dissipation: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiagnosticsSeries {
    pub rows: Vec<DiagnosticsRow>,
}

pub const DIAGNOSTICS_HEADER: &str =
    "t,mean_phi,free_energy_reg,sup_chi,sup_G_eps,dual_norm_dphi,newton_iters,l2_dphi,overshoot,dissipation";

impl DiagnosticsSeries {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", DIAGNOSTICS_HEADER)?;
        for r in &self.rows {
            writeln!(
                w,
                "{:e},{:e},{:e},{:e},{:e},{:e},{},{:e},{:e},{:e}",
                r.t,
                r.mean_phi,
                r.free_energy_reg,
                r.sup_chi,
                r.sup_g_eps,
                r.dual_norm_dphi,
                r.newton_iters,
                r.l2_dphi,
                r.overshoot,
                r.dissipation
            )?;
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn sup_chi(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.sup_chi).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub regime: BoundaryKind,
    pub dt: f64,
    pub eps: f64,
    pub snapshots: Vec<StateSnapshot>,
    pub diagnostics: DiagnosticsSeries,
}

impl Trajectory {
    pub fn final_state(&self) -> &StateSnapshot {
        self.snapshots.last().expect("trajectory holds the initial snapshot")
    }

    pub fn snapshot_at(&self, t: f64) -> Option<&StateSnapshot> {
        self.snapshots.iter().find(|s| (s.t - t).abs() <= 1e-9 * t.abs().max(1.0))
    }
}

/// `G_ε = μ + g − π(φ) − τ∂tφ* + Δφ*` at the snapshot time.
pub fn assemble_g_eps(state: &StateSnapshot, data: &ProblemData) -> Result<Field> {
    let dt_star = data.target.dt.as_ref().ok_or_else(|| Error::MissingData("time derivative of the target".into()))?;
    let lap_star = data.target.laplacian.as_ref().ok_or_else(|| Error::MissingData("Laplacian of the target".into()))?;
    let grid = state.phi.grid();
    let t = state.t;
    let vals = (0..grid.n_cells())
        .map(|i| {
            let x = grid.cell_center(i);
            state.mu.values()[i] + data.g.eval(&x, t) - data.spec.pi(state.phi.values()[i]) - data.tau * dt_star(&x, t)
                + lap_star(&x, t)
        })
        .collect();
    Field::from_values(grid, vals)
}

/// Per-run context: operators, the harmonic extension cache and the
/// Galerkin basis.
struct Runner<'a> {
    data: &'a ProblemData,
    cfg: &'a SolverConfig,
    ops: Ops,
    basis: Option<NeumannEigenbasis>,
    mu_h_cache: Option<(f64, Field)>,
}

/// Internal state between steps.
struct State {
    t: f64,
    phi: Vec<f64>,
    /// Galerkin coefficients, if that scheme is active.
    coeffs: Option<Vec<f64>>,
}

struct Advance {
    state: State,
    mu: Vec<f64>,
    xi: Vec<f64>,
    zeta: Vec<f64>,
    newton_iters: usize,
}

impl<'a> Runner<'a> {
    fn new(data: &'a ProblemData, cfg: &'a SolverConfig) -> Result<Self> {
        let grid = data.grid();
        let basis = match cfg.scheme {
            Scheme::GalerkinNeumann { modes, .. } => Some(neumann_eigenbasis(grid, modes)?),
            _ => None,
        };
        Ok(Runner { data, cfg, ops: Ops::new(grid, cfg.backend), basis, mu_h_cache: None })
    }

    fn grid(&self) -> &Grid {
        self.data.grid()
    }

    fn mu_h(&mut self, t: f64) -> Result<Field> {
        if let Some((tc, f)) = &self.mu_h_cache {
            if *tc == t {
                return Ok(f.clone());
            }
        }
        let f = match &self.data.bc {
            MuBoundaryCondition::Dirichlet(datum) => match self.cfg.backend {
                LinearBackend::Cg => harmonic_extension(self.grid(), datum, t)?,
                LinearBackend::Spectral => {
                    let src = self.grid().dirichlet_boundary_source(|x| datum(x, t));
                    Field::from_values(self.grid(), self.ops.inv_dirichlet(src.values())?)?
                }
            },
            MuBoundaryCondition::NeumannZeroFlux => Field::zeros(self.grid()),
        };
        self.mu_h_cache = Some((t, f.clone()));
        Ok(f)
    }

    /// Total forcing at `t`: `g (+ μ_H) (+ mms)`.
    fn forcing(&mut self, t: f64) -> Result<Vec<f64>> {
        let grid = *self.grid();
        let mut f: Vec<f64> = (0..grid.n_cells()).map(|i| self.data.g.eval(&grid.cell_center(i), t)).collect();
        if let Some(mms) = &self.cfg.mms_source {
            for (i, v) in f.iter_mut().enumerate() {
                *v += mms(&grid.cell_center(i), t);
            }
        }
        if self.data.regime() == BoundaryKind::Dirichlet {
            let mh = self.mu_h(t)?;
            for (v, m) in f.iter_mut().zip(mh.values()) {
                *v += m;
            }
        }
        Ok(f)
    }

    fn zeta(&self, phi: &[f64], t: f64) -> Vec<f64> {
        let grid = self.grid();
        let smc = &self.data.smc;
        if smc.rho == 0.0 {
            return vec![0.0; phi.len()];
        }
        (0..phi.len()).map(|i| smc.s_eps(phi[i] - (self.data.target.value)(&grid.cell_center(i), t))).collect()
    }

    fn initial(&mut self) -> Result<(State, StateSnapshot)> {
        let phi = self.data.phi0.values().to_vec();
        let n = phi.len();
        let eps = self.cfg.eps;
        let zeta = self.zeta(&phi, 0.0);
        let mut lap = vec![0.0; n];
        self.ops.laplacian_neumann(&phi, &mut lap);
        let f = self.forcing(0.0)?;
        let mut xi = vec![0.0; n];
        let mut mu = vec![0.0; n];
        for i in 0..n {
            xi[i] = self.data.spec.beta_eps(eps, phi[i])?;
            mu[i] = -lap[i] + xi[i] + self.data.spec.pi(phi[i]) + zeta[i] - f[i];
        }
        if self.data.regime() == BoundaryKind::Dirichlet {
            // f carries g + μ_H; the physical μ adds μ_H back.
            let mh = self.mu_h(0.0)?;
            for (v, m) in mu.iter_mut().zip(mh.values()) {
                *v += m;
            }
        }
        let coeffs = self.basis.as_ref().map(|b| b.project(&self.data.phi0));
        let grid = self.grid();
        let snap = StateSnapshot {
            t: 0.0,
            phi: self.data.phi0.clone(),
            mu: Field::from_values(grid, mu)?,
            xi: Field::from_values(grid, xi)?,
            zeta: Field::from_values(grid, zeta)?,
        };
        Ok((State { t: 0.0, phi, coeffs }, snap))
    }

    /// One step of length `dt`, split in halves on Newton failure.
    fn advance(&mut self, state: &State, dt: f64, depth: usize) -> Result<Advance> {
        match self.try_step(state, dt) {
            Ok(a) => Ok(a),
            Err(e @ (Error::Newton { .. } | Error::Solve { .. })) => {
                if depth >= self.cfg.max_halvings {
                    return Err(attach_time(e, state.t + dt));
                }
                warn!("step at t = {:.6e} failed ({}); retrying with dt = {:.3e}", state.t, e, dt / 2.0);
                let first = self.advance(state, dt / 2.0, depth + 1)?;
                let mut second = self.advance(&first.state, dt / 2.0, depth + 1)?;
                second.newton_iters += first.newton_iters;
                Ok(second)
            }
            Err(e) => Err(e),
        }
    }

    fn try_step(&mut self, state: &State, dt: f64) -> Result<Advance> {
        let t_new = state.t + dt;
        let data = self.data;
        let eps = self.cfg.eps;
        let zeta = self.zeta(&state.phi, t_new);
        let f = self.forcing(t_new)?;
        let rhs: Vec<f64> =
            (0..state.phi.len()).map(|i| data.spec.pi(state.phi[i]) + zeta[i] - f[i]).collect();
        match self.cfg.scheme {
            Scheme::CoupledNeumann | Scheme::EliminatedDirichlet => {
                let kind = data.regime();
                let out = steppers::increment_step(
                    &self.ops,
                    &data.spec,
                    kind,
                    eps,
                    data.tau,
                    dt,
                    &state.phi,
                    &Explicit { rhs },
                    self.cfg.newton(),
                )
                .map_err(|e| attach_time(e, t_new))?;
                let mut mu = out.mu;
                if kind == BoundaryKind::Dirichlet {
                    let mh = self.mu_h(t_new)?;
                    for (v, m) in mu.iter_mut().zip(mh.values()) {
                        *v += m;
                    }
                }
                Ok(Advance {
                    state: State { t: t_new, phi: out.phi, coeffs: None },
                    mu,
                    xi: out.xi,
                    zeta,
                    newton_iters: out.newton_iters,
                })
            }
            Scheme::GalerkinNeumann { integrator, .. } => {
                let basis = self.basis.as_ref().expect("basis built for Galerkin runs");
                let coeffs = state.coeffs.as_ref().expect("Galerkin state carries coefficients");
                let grid = *self.grid();
                match integrator {
                    GalerkinIntegrator::BackwardEuler => {
                        let explicit = basis.project(&Field::from_values(&grid, rhs)?);
                        let out = steppers::galerkin_be_step(
                            basis,
                            &data.spec,
                            eps,
                            data.tau,
                            dt,
                            coeffs,
                            &explicit,
                            self.cfg.newton(),
                        )
                        .map_err(|e| attach_time(e, t_new))?;
                        let phi = basis.synthesize(&out.coeffs).into_values();
                        let mu = basis.synthesize(&out.mu).into_values();
                        Ok(Advance {
                            state: State { t: t_new, phi, coeffs: Some(out.coeffs) },
                            mu,
                            xi: out.xi,
                            zeta,
                            newton_iters: out.newton_iters,
                        })
                    }
                    GalerkinIntegrator::Rk4 => {
                        let basis = self.basis.take().expect("basis built for Galerkin runs");
                        let out = self.galerkin_rk4(&basis, state, coeffs, dt);
                        self.basis = Some(basis);
                        out
                    }
                }
            }
        }
    }

    fn galerkin_rk4(&mut self, basis: &NeumannEigenbasis, state: &State, c0: &[f64], dt: f64) -> Result<Advance> {
        let grid = *self.grid();
        let data = self.data;
        let eps = self.cfg.eps;
        let lams = basis.eigenvalues().to_vec();
        let stage = |c: &[f64], t: f64, runner: &mut Self| -> Result<(Vec<f64>, Vec<f64>)> {
            let phi = basis.synthesize(c);
            let zeta = runner.zeta(phi.values(), t);
            let f = runner.forcing(t)?;
            let mut bvals = vec![0.0; phi.len()];
            let mut forcing = vec![0.0; phi.len()];
            for i in 0..phi.len() {
                let p = phi.values()[i];
                bvals[i] = data.spec.beta_eps(eps, p)?;
                forcing[i] = data.spec.pi(p) + zeta[i] - f[i];
            }
            let b_proj = basis.project(&Field::from_values(&grid, bvals)?);
            let f_proj = basis.project(&Field::from_values(&grid, forcing)?);
            let rate = steppers::galerkin_rhs(&lams, data.tau, c, &b_proj, &f_proj);
            // μ_j = -c_j'/λ_j for j ≥ 2; μ_1 from the e₁-balance.
            let mut mu = vec![0.0; c.len()];
            mu[0] = b_proj[0] + f_proj[0];
            for j in 1..c.len() {
                mu[j] = -rate[j] / lams[j];
            }
            Ok((rate, mu))
        };
        let t = state.t;
        let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + s * y).collect() };
        let (k1, _) = stage(c0, t, self)?;
        let (k2, _) = stage(&axpy(c0, 0.5 * dt, &k1), t + 0.5 * dt, self)?;
        let (k3, _) = stage(&axpy(c0, 0.5 * dt, &k2), t + 0.5 * dt, self)?;
        let (k4, _) = stage(&axpy(c0, dt, &k3), t + dt, self)?;
        let c1: Vec<f64> =
            (0..c0.len()).map(|j| c0[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])).collect();
        if c1.iter().any(|v| !v.is_finite()) {
            return Err(Error::Newton { t: t + dt, residual: f64::INFINITY, iterations: 0 });
        }
        let (_, mu_modes) = stage(&c1, t + dt, self)?;
        let phi = basis.synthesize(&c1).into_values();
        let mu = basis.synthesize(&mu_modes).into_values();
        let xi = phi.iter().map(|&p| data.spec.beta_eps(eps, p)).collect::<Result<Vec<_>>>()?;
        let zeta = self.zeta(&phi, t + dt);
        Ok(Advance { state: State { t: t + dt, phi, coeffs: Some(c1) }, mu, xi, zeta, newton_iters: 0 })
    }

    fn snapshot(&self, adv: &Advance) -> Result<StateSnapshot> {
        let grid = self.grid();
        Ok(StateSnapshot {
            t: adv.state.t,
            phi: Field::from_values(grid, adv.state.phi.clone())?,
            mu: Field::from_values(grid, adv.mu.clone())?,
            xi: Field::from_values(grid, adv.xi.clone())?,
            zeta: Field::from_values(grid, adv.zeta.clone())?,
        })
    }

    fn overshoot(&self, phi: &[f64]) -> f64 {
        let d = self.data.spec.domain();
        phi.iter().map(|&p| (d.lo - p).max(p - d.hi).max(0.0)).fold(0.0, f64::max)
    }

    fn sup_chi(&self, phi: &[f64], t: f64) -> f64 {
        let grid = self.grid();
        (0..phi.len()).map(|i| (phi[i] - (self.data.target.value)(&grid.cell_center(i), t)).abs()).fold(0.0, f64::max)
    }

    fn row(&self, snap: &StateSnapshot, prev_phi: Option<&[f64]>, dt: f64, iters: usize, diss: &mut f64) -> Result<DiagnosticsRow> {
        let phi = snap.phi.values();
        let (dual, l2) = match prev_phi {
            Some(prev) => {
                let v: Vec<f64> = phi.iter().zip(prev).map(|(a, b)| (a - b) / dt).collect();
                let dsq = self.ops.dual_norm_sq(self.data.regime(), &v)?;
                let l2 = self.ops.l2(&v);
                *diss += dt * (self.data.tau * l2 * l2 + dsq);
                (dsq.sqrt(), l2)
            }
            None => (0.0, 0.0),
        };
        let sup_g = if prev_phi.is_some() && self.data.target.dt.is_some() && self.data.target.laplacian.is_some() {
            assemble_g_eps(snap, self.data)?.linf_norm()
        } else {
            f64::NAN
        };
        Ok(DiagnosticsRow {
            t: snap.t,
            mean_phi: snap.phi.mean(),
            free_energy_reg: free_energy_reg(&snap.phi, &self.data.spec, self.grid(), self.cfg.eps)?,
            sup_chi: self.sup_chi(phi, snap.t),
            sup_g_eps: sup_g,
            dual_norm_dphi: dual,
            newton_iters: iters,
            l2_dphi: l2,
            overshoot: self.overshoot(phi),
            dissipation: *diss,
        })
    }
}

fn output_steps(cfg: &SolverConfig, n_steps: usize) -> Result<Vec<usize>> {
    let times: Vec<f64> = if cfg.output_times.is_empty() { vec![cfg.t_final] } else { cfg.output_times.clone() };
    let mut steps = Vec::with_capacity(times.len());
    for &t in &times {
        if t == 0.0 {
            continue;
        }
        let k = (t / cfg.dt).round();
        if !(t > 0.0) || (k * cfg.dt - t).abs() > 1e-9 * t.max(cfg.dt) || k as usize > n_steps {
            return Err(Error::Param(format!("output time {} is not a multiple of dt within [0, T]", t)));
        }
        steps.push(k as usize);
    }
    steps.sort_unstable();
    steps.dedup();
    Ok(steps)
}

/// Integrates from `t = 0` to `T`, recording snapshots at the requested
/// output times and a diagnostics row after every step. Failed steps are
/// retried with halved sub-steps.
pub fn run(data: &ProblemData, cfg: &SolverConfig) -> Result<Trajectory> {
    data.validate()?;
    cfg.check_regime(data.regime())?;
    let n_steps = cfg.n_steps()?;
    let outputs = output_steps(cfg, n_steps)?;
    let smc = &data.smc;
    if smc.rho > 0.0 && cfg.dt * smc.rho / (data.tau * smc.eps) > 1.0 {
        warn!(
            "explicit control term is stiff: dt*rho/(tau*eps) = {:.3e} > 1",
            cfg.dt * smc.rho / (data.tau * smc.eps)
        );
    }
    let mut runner = Runner::new(data, cfg)?;
    if let (Some(b), Scheme::GalerkinNeumann { integrator: GalerkinIntegrator::Rk4, .. }) = (&runner.basis, cfg.scheme) {
        steppers::warn_rk4_stiffness(b.eigenvalues(), data.tau, cfg.dt);
    }
    let (mut state, snap0) = runner.initial()?;
    let mut diss = 0.0;
    let mut diagnostics = DiagnosticsSeries::default();
    diagnostics.rows.push(runner.row(&snap0, None, cfg.dt, 0, &mut diss)?);
    let mut snapshots = vec![snap0];
    let mut next_out = 0;
    for n in 1..=n_steps {
        // Step times are computed from the index to avoid drift.
        let t_target = n as f64 * cfg.dt;
        let dt = t_target - state.t;
        let prev = state.phi.clone();
        let mut adv = runner.advance(&state, dt, 0)?;
        adv.state.t = t_target;
        let snap = runner.snapshot(&adv)?;
        diagnostics.rows.push(runner.row(&snap, Some(&prev), dt, adv.newton_iters, &mut diss)?);
        if next_out < outputs.len() && outputs[next_out] == n {
            snapshots.push(snap);
            next_out += 1;
        }
        state = adv.state;
    }
    Ok(Trajectory { regime: data.regime(), dt: cfg.dt, eps: cfg.eps, snapshots, diagnostics })
}

fn single_step(data: &ProblemData, cfg: &SolverConfig, state: &StateSnapshot) -> Result<StateSnapshot> {
    data.validate()?;
    cfg.check_regime(data.regime())?;
    let mut runner = Runner::new(data, cfg)?;
    let coeffs = runner.basis.as_ref().map(|b| b.project(&state.phi));
    let st = State { t: state.t, phi: state.phi.values().to_vec(), coeffs };
    let adv = runner.advance(&st, cfg.dt, 0)?;
    runner.snapshot(&adv)
}

/// One backward-Euler step of the coupled Neumann system from `state`.
pub fn step_coupled_neumann(state: &StateSnapshot, data: &ProblemData, cfg: &SolverConfig) -> Result<StateSnapshot> {
    let mut c = cfg.clone();
    c.scheme = Scheme::CoupledNeumann;
    single_step(data, &c, state)
}

/// One backward-Euler step of the eliminated Dirichlet formulation.
pub fn step_eliminated_dirichlet(
    state: &StateSnapshot,
    data: &ProblemData,
    cfg: &SolverConfig,
) -> Result<StateSnapshot> {
    let mut c = cfg.clone();
    c.scheme = Scheme::EliminatedDirichlet;
    single_step(data, &c, state)
}

/// One Galerkin step on modal coefficients at time `t`; `cfg.scheme` must be
/// `GalerkinNeumann` with as many modes as `coeffs` has entries.
pub fn step_galerkin_neumann(coeffs: &[f64], t: f64, data: &ProblemData, cfg: &SolverConfig) -> Result<Vec<f64>> {
    let modes = match cfg.scheme {
        Scheme::GalerkinNeumann { modes, .. } => modes,
        _ => return Err(Error::Param("step_galerkin_neumann needs a GalerkinNeumann scheme".into())),
    };
    if modes != coeffs.len() {
        return Err(Error::Range { requested: coeffs.len(), available: modes });
    }
    data.validate()?;
    cfg.check_regime(data.regime())?;
    let mut runner = Runner::new(data, cfg)?;
    let phi = runner.basis.as_ref().expect("basis").synthesize(coeffs).into_values();
    let st = State { t, phi, coeffs: Some(coeffs.to_vec()) };
    let adv = runner.advance(&st, cfg.dt, 0)?;
    Ok(adv.state.coeffs.expect("Galerkin step keeps coefficients"))
}
