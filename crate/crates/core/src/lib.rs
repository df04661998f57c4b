//! Viscous Cahn–Hilliard dynamics with a sliding-mode control term.
//!
//! The crate is organized bottom-up:
//!
//! * [`potentials`]: convex/Lipschitz splittings, resolvents, Yosida and Moreau
//!   regularizations;
//! * [`smc`]: the regularized sign nonlinearity, the comparison ODE and the
//!   gain-design formulas;
//! * [`grid`]: cell-centered grids, Laplacians, `𝒩`/`𝒟`, dual norms and the
//!   Neumann eigenbasis;
//! * [`solver`]: coupled Neumann, eliminated Dirichlet and Galerkin steppers;
//! * [`analysis`]: mass conservation, comparison and sliding checks,
//!   continuous dependence and Yosida convergence studies, constant probes;
//! * [`profiles`]: the closed set of named spatial profiles used by configs.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod error;
pub mod grid;
pub mod potentials;
pub mod profiles;
pub mod smc;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{BoundaryKind, Field, Grid, MuBoundaryCondition, Point, SpaceTimeFn};
pub use potentials::{Interval, PotentialSpec};
pub use profiles::Profile;
pub use smc::{SlidingDesign, SmcParams};
pub use solver::{
    DiagnosticsSeries, ForcingFn, GalerkinIntegrator, LinearBackend, ProblemData, Scheme, SolverConfig,
    StateSnapshot, TargetProfile, Trajectory,
};
