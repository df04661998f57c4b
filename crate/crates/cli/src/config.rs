//! Run configuration: a TOML file with named sections.
//!
//! ```toml
//! [grid]
//! cells = [128]
//! lengths = [0.5]
//!
//! [potential]
//! kind = "regular"            # or "logarithmic" (c1), "double_obstacle" (c2)
//!
//! [bc]
//! kind = "dirichlet"          # or "neumann"; optional `datum` profile
//!
//! [control]
//! rho = 0.0
//!
//! [data]
//! phi0 = { profile = "cosine", offset = 0.2, amplitude = 0.5, wave = [1] }
//! target = { profile = "constant", value = 0.2 }
//!
//! [time]
//! dt = 1e-3
//! final_time = 1.0
//! output_every = 0.01
//!
//! [solver]
//! eps = 1e-3
//! ```
//!
//! See the README for the full list of keys.

use serde::Deserialize;

use chsmc_core::analysis::{Perturbation, SlidingSettings};
use chsmc_core::potentials::PotentialSpec;
use chsmc_core::smc::SmcParams;
use chsmc_core::solver::{GalerkinIntegrator, LinearBackend, ProblemData, Scheme, SolverConfig};
use chsmc_core::{BoundaryKind, Grid, MuBoundaryCondition, Profile};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub potential: PotentialSection,
    #[serde(default)]
    pub bc: BcSection,
    #[serde(default)]
    pub control: ControlSection,
    pub data: DataSection,
    pub time: TimeSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Optional; must match the number of `cells` entries when given.
    pub dim: Option<usize>,
    pub cells: Vec<usize>,
    pub lengths: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSection {
    Regular,
    Logarithmic { c1: f64 },
    DoubleObstacle { c2: f64 },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BcSection {
    #[default]
    Neumann,
    Dirichlet {
        #[serde(default)]
        datum: Option<ProfileConfig>,
    },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    #[serde(default)]
    pub rho: f64,
    /// Sign regularization; defaults to `solver.eps`.
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub phi0: ProfileConfig,
    pub g: Option<ProfileConfig>,
    pub target: Option<ProfileConfig>,
    /// `φ*(t) = offset + e^{rate t} (profile − offset)`.
    #[serde(default)]
    pub target_rate: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_tau() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub dt: f64,
    pub final_time: f64,
    pub output_every: Option<f64>,
    pub output_times: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    Coupled,
    Dirichlet,
    Galerkin,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Defaults to `coupled` under Neumann and `dirichlet` under Dirichlet
    /// conditions.
    pub scheme: Option<SchemeName>,
    pub modes: Option<usize>,
    #[serde(default)]
    pub rk4: bool,
    #[serde(default)]
    pub cg: bool,
    pub newton_tol: Option<f64>,
    pub newton_max_iter: Option<usize>,
}

fn default_eps() -> f64 {
    1e-2
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            eps: default_eps(),
            scheme: None,
            modes: None,
            rk4: false,
            cg: false,
            newton_tol: None,
            newton_max_iter: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Mass,
    Energy,
    Sliding,
    Contdep,
    Yosida,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default)]
    pub checks: Vec<Check>,
    #[serde(default = "default_gain_factor")]
    pub gain_factor: f64,
    #[serde(default = "one")]
    pub rho_multiplier: f64,
    /// Fixed gain for the sliding main run instead of the designed one.
    pub rho: Option<f64>,
    #[serde(default)]
    pub calibration_rho: f64,
    #[serde(default = "default_dt_safety")]
    pub dt_safety: f64,
    #[serde(default = "yes")]
    pub ablation: bool,
    /// Acceptance factor on the sliding-time bound.
    #[serde(default = "default_bound_factor")]
    pub bound_factor: f64,
    /// Absolute slack for the energy check.
    #[serde(default = "default_energy_tol")]
    pub energy_tol: f64,
    pub contdep: Option<ContdepSection>,
    pub yosida_eps: Option<Vec<f64>>,
}

fn default_gain_factor() -> f64 {
    2.0
}
fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_dt_safety() -> f64 {
    0.5
}
fn default_bound_factor() -> f64 {
    1.1
}
fn default_energy_tol() -> f64 {
    1e-9
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            checks: Vec::new(),
            gain_factor: default_gain_factor(),
            rho_multiplier: 1.0,
            rho: None,
            calibration_rho: 0.0,
            dt_safety: default_dt_safety(),
            ablation: true,
            bound_factor: default_bound_factor(),
            energy_tol: default_energy_tol(),
            contdep: None,
            yosida_eps: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    Forcing,
    Initial,
    Target,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContdepSection {
    pub perturbation: PerturbationKind,
    pub direction: ProfileConfig,
    pub deltas: Vec<f64>,
    /// Largest admissible max/min ratio over the sweep (forcing and initial).
    #[serde(default = "default_spread")]
    pub max_spread: f64,
}

fn default_spread() -> f64 {
    3.0
}

/// Named profile; `wave` lists half-period counts per axis.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum ProfileConfig {
    Constant {
        value: f64,
    },
    Cosine {
        #[serde(default)]
        offset: f64,
        amplitude: f64,
        wave: Vec<usize>,
    },
    Sine {
        #[serde(default)]
        offset: f64,
        amplitude: f64,
        wave: Vec<usize>,
    },
    Tanh {
        #[serde(default)]
        offset: f64,
        amplitude: f64,
        center: f64,
        width: f64,
        #[serde(default)]
        axis: usize,
    },
    Ramp {
        from: f64,
        to: f64,
        #[serde(default)]
        axis: usize,
    },
}

fn wave3(key: &str, w: &[usize]) -> Result<[usize; 3], CliError> {
    if w.is_empty() || w.len() > 3 {
        return Err(CliError::Config(format!("{}: wave needs one to three entries", key)));
    }
    let mut out = [0; 3];
    out[..w.len()].copy_from_slice(w);
    Ok(out)
}

impl ProfileConfig {
    pub fn to_profile(&self, key: &str, grid: &Grid) -> Result<Profile, CliError> {
        let p = match self {
            ProfileConfig::Constant { value } => Profile::Constant { value: *value },
            ProfileConfig::Cosine { offset, amplitude, wave } => {
                Profile::Cosine { offset: *offset, amplitude: *amplitude, wave: wave3(key, wave)? }
            }
            ProfileConfig::Sine { offset, amplitude, wave } => {
                Profile::Sine { offset: *offset, amplitude: *amplitude, wave: wave3(key, wave)? }
            }
            ProfileConfig::Tanh { offset, amplitude, center, width, axis } => {
                Profile::Tanh { offset: *offset, amplitude: *amplitude, center: *center, width: *width, axis: *axis }
            }
            ProfileConfig::Ramp { from, to, axis } => Profile::Ramp { from: *from, to: *to, axis: *axis },
        };
        p.validate(grid).map_err(|e| CliError::Config(format!("{}: {}", key, e)))?;
        Ok(p)
    }
}

fn bad(key: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {}", key, why))
}

/// Everything a command needs, built from a validated configuration.
#[derive(Clone)]
pub struct Setup {
    pub data: ProblemData,
    pub solver: SolverConfig,
    pub output_every: Option<f64>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {}", path.display(), e)))?;
        Self::from_toml_str(&text)
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        let g = &self.grid;
        if let Some(d) = g.dim {
            if d != g.cells.len() {
                return Err(bad("grid.dim", format!("{} does not match {} cell counts", d, g.cells.len())));
            }
        }
        if g.cells.len() != g.lengths.len() {
            return Err(bad("grid.lengths", "needs one entry per entry of grid.cells"));
        }
        Grid::new(&g.cells, &g.lengths).map_err(|e| bad("grid", e))
    }

    pub fn regime(&self) -> BoundaryKind {
        match self.bc {
            BcSection::Neumann => BoundaryKind::Neumann,
            BcSection::Dirichlet { .. } => BoundaryKind::Dirichlet,
        }
    }

    fn scheme(&self) -> Result<Scheme, CliError> {
        let name = self.solver.scheme.unwrap_or(match self.regime() {
            BoundaryKind::Neumann => SchemeName::Coupled,
            BoundaryKind::Dirichlet => SchemeName::Dirichlet,
        });
        let compatible = match name {
            SchemeName::Coupled | SchemeName::Galerkin => self.regime() == BoundaryKind::Neumann,
            SchemeName::Dirichlet => self.regime() == BoundaryKind::Dirichlet,
        };
        if !compatible {
            return Err(bad("solver.scheme", format!("{:?} does not fit {:?} conditions for mu", name, self.regime())));
        }
        Ok(match name {
            SchemeName::Coupled => Scheme::CoupledNeumann,
            SchemeName::Dirichlet => Scheme::EliminatedDirichlet,
            SchemeName::Galerkin => Scheme::GalerkinNeumann {
                modes: self.solver.modes.ok_or_else(|| bad("solver.modes", "required for the galerkin scheme"))?,
                integrator: if self.solver.rk4 { GalerkinIntegrator::Rk4 } else { GalerkinIntegrator::BackwardEuler },
            },
        })
    }

    fn potential(&self) -> Result<PotentialSpec, CliError> {
        match self.potential {
            PotentialSection::Regular => Ok(PotentialSpec::Regular),
            PotentialSection::Logarithmic { c1 } => PotentialSpec::logarithmic(c1).map_err(|e| bad("potential.c1", e)),
            PotentialSection::DoubleObstacle { c2 } => {
                PotentialSpec::double_obstacle(c2).map_err(|e| bad("potential.c2", e))
            }
        }
    }

    pub fn wants(&self, check: Check) -> bool {
        self.experiment.checks.contains(&check)
    }

    /// Cross-field validation followed by assembly of the problem and
    /// solver configuration.
    pub fn build(&self) -> Result<Setup, CliError> {
        let grid = self.grid()?;
        let scheme = self.scheme()?;
        let spec = self.potential()?;
        let t = &self.time;
        if !(t.dt > 0.0) || !(t.final_time >= 0.0) {
            return Err(bad("time", "need dt > 0 and final_time >= 0"));
        }
        if t.output_every.is_some() && t.output_times.is_some() {
            return Err(bad("time.output_times", "give either output_every or output_times"));
        }
        if !(self.solver.eps > 0.0) {
            return Err(bad("solver.eps", "must be positive"));
        }
        if !(self.data.tau > 0.0) {
            return Err(bad("data.tau", "must be positive"));
        }
        let ctl_eps = self.control.eps.unwrap_or(self.solver.eps);
        let smc = SmcParams::new(self.control.rho, ctl_eps).map_err(|e| bad("control", e))?;

        let phi0 = self.data.phi0.to_profile("data.phi0", &grid)?.field(&grid);
        let bc = match &self.bc {
            BcSection::Neumann => MuBoundaryCondition::NeumannZeroFlux,
            BcSection::Dirichlet { datum: None } => MuBoundaryCondition::homogeneous_dirichlet(),
            BcSection::Dirichlet { datum: Some(p) } => {
                MuBoundaryCondition::Dirichlet(p.to_profile("bc.datum", &grid)?.function(&grid))
            }
        };
        let mut data = ProblemData::new(phi0, spec, bc, self.data.tau).with_control(smc);
        if let Some(g) = &self.data.g {
            data = data.with_forcing(g.to_profile("data.g", &grid)?.function(&grid));
        }
        if let Some(p) = &self.data.target {
            data = data.with_target(p.to_profile("data.target", &grid)?.target(&grid, self.data.target_rate));
        }
        data.validate().map_err(|e| bad("data.phi0", e))?;

        if self.wants(Check::Sliding) {
            if self.regime() != BoundaryKind::Dirichlet {
                return Err(bad("experiment.checks", "sliding needs Dirichlet conditions for mu"));
            }
            let w0 = data.phi0.sub(&data.target.sample(&grid, 0.0)).linf_norm();
            if w0 > 0.0 && !(ctl_eps < w0) {
                return Err(bad("solver.eps", format!("must lie in (0, w0) = (0, {}) for sliding checks", w0)));
            }
        }
        if self.wants(Check::Contdep) && self.experiment.contdep.is_none() {
            return Err(bad("experiment.contdep", "required when the contdep check is requested"));
        }
        if self.wants(Check::Yosida) && self.experiment.yosida_eps.is_none() {
            return Err(bad("experiment.yosida_eps", "required when the yosida check is requested"));
        }

        let mut solver = SolverConfig::new(self.solver.eps, t.dt, t.final_time, scheme).map_err(|e| bad("time", e))?;
        if self.solver.cg {
            solver.backend = LinearBackend::Cg;
        }
        if let Some(tol) = self.solver.newton_tol {
            solver.newton_tol = tol;
        }
        if let Some(n) = self.solver.newton_max_iter {
            solver.newton_max_iter = n;
        }
        if let Some(every) = t.output_every {
            if !(every > 0.0) {
                return Err(bad("time.output_every", "must be positive"));
            }
            solver = solver.with_output_every(every);
        }
        if let Some(times) = &t.output_times {
            solver = solver.with_output_times(times.clone());
        }
        Ok(Setup { data, solver, output_every: t.output_every })
    }

    pub fn sliding_settings(&self, output_every: Option<f64>) -> SlidingSettings {
        let e = &self.experiment;
        SlidingSettings {
            gain_factor: e.gain_factor,
            rho_multiplier: e.rho_multiplier,
            rho_override: e.rho,
            calibration_rho: e.calibration_rho,
            output_every: output_every.unwrap_or(SlidingSettings::default().output_every),
            dt_safety: e.dt_safety,
            ablation: e.ablation,
        }
    }

    pub fn perturbation(&self, grid: &Grid) -> Result<Option<(Perturbation, &ContdepSection)>, CliError> {
        let Some(c) = &self.experiment.contdep else { return Ok(None) };
        let p = c.direction.to_profile("experiment.contdep.direction", grid)?;
        let pert = match c.perturbation {
            PerturbationKind::Forcing => Perturbation::Forcing(p.function(grid)),
            PerturbationKind::Initial => Perturbation::Initial(p.field(grid)),
            PerturbationKind::Target => Perturbation::Target(p.function(grid)),
        };
        Ok(Some((pert, c)))
    }
}
