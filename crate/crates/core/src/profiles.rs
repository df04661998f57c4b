//! Closed set of named spatial profiles for configuration files.
//!
//! Every profile knows its exact Laplacian, so a profile used as a target
//! carries the derivatives needed by the comparison drift.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Point, SpaceTimeFn};
use crate::solver::TargetProfile;

/// Named profile on `(0, L_x) × (0, L_y) × (0, L_z)`. Wave numbers count
/// half periods: `cos(k π x / L)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Constant { value: f64 },
    /// `offset + amplitude · Π_a cos(k_a π x_a / L_a)`.
    Cosine { offset: f64, amplitude: f64, wave: [usize; 3] },
    /// `offset + amplitude · Π_{a: k_a > 0} sin(k_a π x_a / L_a)`.
    Sine { offset: f64, amplitude: f64, wave: [usize; 3] },
    /// `offset + amplitude · tanh((x_axis − center) / width)`.
    Tanh { offset: f64, amplitude: f64, center: f64, width: f64, axis: usize },
    /// Linear from `from` at `x_axis = 0` to `to` at `x_axis = L_axis`.
    Ramp { from: f64, to: f64, axis: usize },
}

impl Profile {
    pub const NAMES: [&'static str; 5] = ["constant", "cosine", "sine", "tanh", "ramp"];

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let axis_ok = |a: usize| a < grid.dim();
        match *self {
            Profile::Tanh { width, axis, .. } if !(width > 0.0) || !axis_ok(axis) => {
                Err(Error::Param("tanh profile needs width > 0 and an axis of the grid".into()))
            }
            Profile::Ramp { axis, .. } if !axis_ok(axis) => Err(Error::Param("ramp axis is not an axis of the grid".into())),
            Profile::Cosine { wave, .. } | Profile::Sine { wave, .. } if wave[grid.dim()..].iter().any(|&k| k > 0) => {
                Err(Error::Param("wave numbers given for axes the grid does not have".into()))
            }
            _ => Ok(()),
        }
    }

    fn offset(&self) -> f64 {
        match *self {
            Profile::Constant { value } => value,
            Profile::Cosine { offset, .. } | Profile::Sine { offset, .. } | Profile::Tanh { offset, .. } => offset,
            Profile::Ramp { from, .. } => from,
        }
    }

    /// Value at `x` on a domain with side lengths `l`.
    pub fn eval(&self, l: &[f64; 3], x: &Point) -> f64 {
        match *self {
            Profile::Constant { value } => value,
            Profile::Cosine { offset, amplitude, wave } => {
                offset + amplitude * (0..3).map(|a| (PI * wave[a] as f64 * x[a] / l[a]).cos()).product::<f64>()
            }
            Profile::Sine { offset, amplitude, wave } => {
                offset
                    + amplitude
                        * (0..3).filter(|&a| wave[a] > 0).map(|a| (PI * wave[a] as f64 * x[a] / l[a]).sin()).product::<f64>()
            }
            Profile::Tanh { offset, amplitude, center, width, axis } => {
                offset + amplitude * ((x[axis] - center) / width).tanh()
            }
            Profile::Ramp { from, to, axis } => from + (to - from) * x[axis] / l[axis],
        }
    }

    /// Exact Laplacian at `x`.
    pub fn laplacian(&self, l: &[f64; 3], x: &Point) -> f64 {
        match *self {
            Profile::Constant { .. } | Profile::Ramp { .. } => 0.0,
            Profile::Cosine { wave, .. } | Profile::Sine { wave, .. } => {
                let k2: f64 = (0..3).map(|a| (PI * wave[a] as f64 / l[a]).powi(2)).sum();
                -k2 * (self.eval(l, x) - self.offset())
            }
            Profile::Tanh { amplitude, center, width, axis, .. } => {
                let th = ((x[axis] - center) / width).tanh();
                -2.0 * amplitude * th * (1.0 - th * th) / (width * width)
            }
        }
    }

    fn lengths(grid: &Grid) -> [f64; 3] {
        let mut l = [1.0; 3];
        l[..grid.dim()].copy_from_slice(grid.lengths());
        l
    }

    pub fn field(&self, grid: &Grid) -> Field {
        let l = Self::lengths(grid);
        Field::from_fn(grid, |x| self.eval(&l, x))
    }

    /// Time-independent space-time function.
    pub fn function(&self, grid: &Grid) -> SpaceTimeFn {
        let l = Self::lengths(grid);
        let p = self.clone();
        Arc::new(move |x, _| p.eval(&l, x))
    }

    /// Target `offset + e^{rate t} (profile − offset)` with exact time
    /// derivative and Laplacian.
    pub fn target(&self, grid: &Grid, rate: f64) -> TargetProfile {
        let l = Self::lengths(grid);
        let (p1, p2, p3) = (self.clone(), self.clone(), self.clone());
        let c = self.offset();
        TargetProfile::with_derivatives(
            Arc::new(move |x, t| c + (rate * t).exp() * (p1.eval(&l, x) - c)),
            Arc::new(move |x, t| rate * (rate * t).exp() * (p2.eval(&l, x) - c)),
            Arc::new(move |x, t| (rate * t).exp() * p3.laplacian(&l, x)),
        )
    }
}
