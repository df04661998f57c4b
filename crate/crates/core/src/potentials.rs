//! Convex/Lipschitz splittings of the phase-field potential.
//!
//! A potential `f = B̂ + Π` is described by its convex part `B̂` (with
//! subdifferential `β`, possibly multivalued at closed endpoints of its
//! domain) and a smooth perturbation `Π` with Lipschitz derivative `π`.
//! The Yosida approximation `β_ε`, the resolvent `J_ε = (I + εβ)⁻¹` and the
//! Moreau envelope `B̂_ε` are computed here; they are the innermost kernels of
//! every stepper.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

/// Scalar map used by user-defined potentials.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

const RESOLVENT_MAX_ITER: usize = 100;
const RESOLVENT_STEP_TOL: f64 = 1e-13;

/// An interval of the real line, each end open or closed (infinite ends are open).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    pub fn real_line() -> Self {
        Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY, lo_closed: false, hi_closed: false }
    }

    pub fn closed(lo: f64, hi: f64) -> Self {
        Interval { lo, hi, lo_closed: true, hi_closed: true }
    }

    pub fn open(lo: f64, hi: f64) -> Self {
        Interval { lo, hi, lo_closed: false, hi_closed: false }
    }

    pub fn contains(&self, r: f64) -> bool {
        if r.is_nan() {
            return false;
        }
        let above = if self.lo_closed { r >= self.lo } else { r > self.lo };
        let below = if self.hi_closed { r <= self.hi } else { r < self.hi };
        above && below
    }

    pub fn contains_interior(&self, r: f64) -> bool {
        r > self.lo && r < self.hi
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = if self.lo_closed { '[' } else { '(' };
        let r = if self.hi_closed { ']' } else { ')' };
        write!(f, "{}{}, {}{}", l, self.lo, self.hi, r)
    }
}

/// User-supplied splitting.
///
/// `beta` must return the minimal section of the subdifferential on the
/// domain. At a closed endpoint the graph is completed by the normal cone,
/// i.e. `β(hi) = [beta(hi), +∞)` and `β(lo) = (-∞, beta(lo)]`.
#[derive(Clone)]
pub struct CustomPotential {
    pub bhat: ScalarFn,
    pub beta: ScalarFn,
    pub beta_prime: Option<ScalarFn>,
    pub pi: ScalarFn,
    pub pi_primitive: ScalarFn,
    pub pi_lipschitz: f64,
    pub domain: Interval,
}

/// Which potential family and its parameters.
#[derive(Clone)]
pub enum PotentialSpec {
    /// `f(r) = (r² - 1)²/4`, split as `B̂ = r⁴/4`, `π(r) = -r`.
    Regular,
    /// Logarithmic double well with `c1 > 1`, `π(r) = -2 c1 r`.
    Logarithmic { c1: f64 },
    /// Indicator of `[-1, 1]` plus `c2 (1 - r²)`, `c2 > 0`.
    DoubleObstacle { c2: f64 },
    Custom(CustomPotential),
}

impl fmt::Debug for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialSpec::Regular => write!(f, "Regular"),
            PotentialSpec::Logarithmic { c1 } => write!(f, "Logarithmic {{ c1: {} }}", c1),
            PotentialSpec::DoubleObstacle { c2 } => write!(f, "DoubleObstacle {{ c2: {} }}", c2),
            PotentialSpec::Custom(c) => write!(f, "Custom {{ domain: {} }}", c.domain),
        }
    }
}

impl PotentialSpec {
    pub fn logarithmic(c1: f64) -> Result<Self> {
        if !(c1 > 1.0) || !c1.is_finite() {
            return Err(Error::Param(format!("logarithmic potential requires c1 > 1, got {}", c1)));
        }
        Ok(PotentialSpec::Logarithmic { c1 })
    }

    pub fn double_obstacle(c2: f64) -> Result<Self> {
        if !(c2 > 0.0) || !c2.is_finite() {
            return Err(Error::Param(format!("double obstacle requires c2 > 0, got {}", c2)));
        }
        Ok(PotentialSpec::DoubleObstacle { c2 })
    }

    /// Validates a user splitting: `B̂(0) = 0`, `0 ∈ D(β)`, finite Lipschitz constant.
    pub fn custom(c: CustomPotential) -> Result<Self> {
        if !c.domain.contains(0.0) {
            return Err(Error::Param(format!("0 must belong to the domain {}", c.domain)));
        }
        let b0 = (c.bhat)(0.0);
        if b0.abs() > 1e-14 {
            return Err(Error::Param(format!("convex part must vanish at 0, got {}", b0)));
        }
        if !(c.pi_lipschitz >= 0.0) || !c.pi_lipschitz.is_finite() {
            return Err(Error::Param("pi_lipschitz must be finite and nonnegative".into()));
        }
        Ok(PotentialSpec::Custom(c))
    }

    pub fn domain(&self) -> Interval {
        match self {
            PotentialSpec::Regular => Interval::real_line(),
            PotentialSpec::Logarithmic { .. } => Interval::open(-1.0, 1.0),
            PotentialSpec::DoubleObstacle { .. } => Interval::closed(-1.0, 1.0),
            PotentialSpec::Custom(c) => c.domain,
        }
    }

    fn check_domain(&self, r: f64) -> Result<()> {
        let d = self.domain();
        if d.contains(r) {
            Ok(())
        } else {
            Err(Error::Domain { value: r, domain: d.to_string() })
        }
    }

    /// Convex part `B̂(r)`; fails outside `D(β)` where it is `+∞`.
    pub fn bhat(&self, r: f64) -> Result<f64> {
        self.check_domain(r)?;
        Ok(match self {
            PotentialSpec::Regular => 0.25 * r.powi(4),
            PotentialSpec::Logarithmic { .. } => log_bhat(r),
            PotentialSpec::DoubleObstacle { .. } => 0.0,
            PotentialSpec::Custom(c) => (c.bhat)(r),
        })
    }

    /// `β(r)`: the single value, or the minimal section where `β` is multivalued.
    pub fn beta(&self, r: f64) -> Result<f64> {
        self.beta0(r)
    }

    /// Minimal-modulus element `β⁰(r)` of `β(r)`.
    pub fn beta0(&self, r: f64) -> Result<f64> {
        self.check_domain(r)?;
        Ok(self.beta_unchecked(r))
    }

    fn beta_unchecked(&self, r: f64) -> f64 {
        match self {
            PotentialSpec::Regular => r * r * r,
            PotentialSpec::Logarithmic { .. } => 2.0 * r.atanh(),
            PotentialSpec::DoubleObstacle { .. } => 0.0,
            PotentialSpec::Custom(c) => (c.beta)(r),
        }
    }

    /// The full section `β(r) = [lo, hi]`, with infinite ends at closed endpoints.
    pub fn beta_graph(&self, r: f64) -> Result<(f64, f64)> {
        self.check_domain(r)?;
        let d = self.domain();
        let b = self.beta_unchecked(r);
        let lo = if d.lo_closed && r == d.lo { f64::NEG_INFINITY } else { b };
        let hi = if d.hi_closed && r == d.hi { f64::INFINITY } else { b };
        Ok((lo, hi))
    }

    /// Derivative of `β` in the interior of the domain.
    fn beta_prime_interior(&self, r: f64) -> Option<f64> {
        match self {
            PotentialSpec::Regular => Some(3.0 * r * r),
            PotentialSpec::Logarithmic { .. } => Some(2.0 / ((1.0 - r) * (1.0 + r))),
            PotentialSpec::DoubleObstacle { .. } => Some(0.0),
            PotentialSpec::Custom(c) => c.beta_prime.as_ref().map(|f| f(r)),
        }
    }

    pub fn pi(&self, r: f64) -> f64 {
        match self {
            PotentialSpec::Regular => -r,
            PotentialSpec::Logarithmic { c1 } => -2.0 * c1 * r,
            PotentialSpec::DoubleObstacle { c2 } => -2.0 * c2 * r,
            PotentialSpec::Custom(c) => (c.pi)(r),
        }
    }

    /// Primitive `Π` of `π`, normalized so that `B̂ + Π` is the physical potential.
    pub fn pi_primitive(&self, r: f64) -> f64 {
        match self {
            PotentialSpec::Regular => 0.25 - 0.5 * r * r,
            PotentialSpec::Logarithmic { c1 } => -c1 * r * r,
            PotentialSpec::DoubleObstacle { c2 } => c2 * (1.0 - r * r),
            PotentialSpec::Custom(c) => (c.pi_primitive)(r),
        }
    }

    pub fn pi_lipschitz(&self) -> f64 {
        match self {
            PotentialSpec::Regular => 1.0,
            PotentialSpec::Logarithmic { c1 } => 2.0 * c1,
            PotentialSpec::DoubleObstacle { c2 } => 2.0 * c2,
            PotentialSpec::Custom(c) => c.pi_lipschitz,
        }
    }

    /// Resolvent `J_ε(r) = (I + εβ)⁻¹ r`, using closed forms where available.
    pub fn resolvent(&self, eps: f64, r: f64) -> Result<f64> {
        check_eps(eps)?;
        match self {
            PotentialSpec::DoubleObstacle { .. } => Ok(r.clamp(-1.0, 1.0)),
            _ => self.resolvent_generic(eps, r),
        }
    }

    /// Resolvent computed by safeguarded Newton iteration on
    /// `F(s) = s + εβ(s) - r`, with bisection fallback and an exact test at
    /// closed endpoints of the domain. Works for every family.
    pub fn resolvent_generic(&self, eps: f64, r: f64) -> Result<f64> {
        check_eps(eps)?;
        if !r.is_finite() {
            return Err(Error::Param(format!("resolvent argument must be finite, got {}", r)));
        }
        if r == 0.0 {
            return Ok(0.0);
        }
        let d = self.domain();
        if d.hi_closed && r >= d.hi + eps * self.beta_unchecked(d.hi) {
            return Ok(d.hi);
        }
        if d.lo_closed && r <= d.lo + eps * self.beta_unchecked(d.lo) {
            return Ok(d.lo);
        }

        // β(0) ∋ 0, so the root lies between 0 and r.
        let (mut a, mut b) = if r > 0.0 { (0.0, r.min(d.hi)) } else { (r.max(d.lo), 0.0) };
        let residual = |s: f64| s + eps * self.beta_unchecked(s) - r;
        let tol_f = 1e-14 * r.abs().max(1.0);

        let mut s = 0.0;
        let mut f = -r;
        for _ in 0..RESOLVENT_MAX_ITER {
            if f.abs() <= tol_f {
                return Ok(s);
            }
            if f < 0.0 {
                a = s;
            } else {
                b = s;
            }
            let slope = match self.beta_prime_interior(s) {
                Some(bp) => 1.0 + eps * bp,
                None => {
                    let h = 1e-7 * s.abs().max(1.0);
                    let (lo, hi) = ((s - h).max(a), (s + h).min(b));
                    if hi > lo && d.contains_interior(lo) && d.contains_interior(hi) {
                        (residual(hi) - residual(lo)) / (hi - lo)
                    } else {
                        f64::NAN
                    }
                }
            };
            // The Newton correction is below the float spacing at s.
            if slope.is_finite() && slope > 0.0 && (f / slope).abs() <= 2.0 * f64::EPSILON * s.abs() {
                return Ok(s);
            }
            let newton = s - f / slope;
            let newton_ok = slope.is_finite()
                && slope > 0.0
                && newton >= a
                && newton <= b
                && newton != s
                && d.contains(newton);
            let next = if newton_ok { newton } else { 0.5 * (a + b) };
            if !newton_ok && (next <= a || next >= b) {
                // Bracket has collapsed to adjacent floating-point numbers.
                return Ok(if d.contains(b) && residual(b).abs() < residual(a).abs() { b } else { a });
            }
            let step = (next - s).abs();
            s = next;
            f = residual(s);
            if step <= RESOLVENT_STEP_TOL && f.abs() <= 1e3 * tol_f {
                return Ok(s);
            }
        }
        Err(Error::Convergence { r, eps, iterations: RESOLVENT_MAX_ITER })
    }

    /// Yosida approximation `β_ε(r) = (r - J_ε r)/ε`.
    pub fn beta_eps(&self, eps: f64, r: f64) -> Result<f64> {
        let s = self.resolvent(eps, r)?;
        Ok((r - s) / eps)
    }

    /// Derivative of `β_ε` (a.e.); lies in `[0, 1/ε]`.
    pub fn beta_eps_prime(&self, eps: f64, r: f64) -> Result<f64> {
        Ok(self.beta_eps_and_prime(eps, r)?.1)
    }

    /// `(β_ε(r), β_ε'(r))` from a single resolvent evaluation.
    pub fn beta_eps_and_prime(&self, eps: f64, r: f64) -> Result<(f64, f64)> {
        let s = self.resolvent(eps, r)?;
        let value = (r - s) / eps;
        let d = self.domain();
        if (d.hi_closed && s == d.hi && r > d.hi) || (d.lo_closed && s == d.lo && r < d.lo) {
            return Ok((value, 1.0 / eps));
        }
        let bp = match self.beta_prime_interior(s) {
            Some(v) => v,
            None => {
                let h = 1e-6 * eps.max(1e-3);
                let up = self.beta_eps(eps, r + h)?;
                let dn = self.beta_eps(eps, r - h)?;
                return Ok((value, ((up - dn) / (2.0 * h)).clamp(0.0, 1.0 / eps)));
            }
        };
        if !bp.is_finite() {
            return Ok((value, 1.0 / eps));
        }
        Ok((value, bp / (1.0 + eps * bp)))
    }

    /// Moreau envelope `B̂_ε(r) = min_s |r - s|²/(2ε) + B̂(s)`.
    pub fn moreau_envelope(&self, eps: f64, r: f64) -> Result<f64> {
        let s = self.resolvent(eps, r)?;
        Ok((r - s) * (r - s) / (2.0 * eps) + self.bhat(s)?)
    }

    /// Potential density `f = B̂ + Π`.
    pub fn density(&self, r: f64) -> Result<f64> {
        Ok(self.bhat(r)? + self.pi_primitive(r))
    }

    /// Regularized density `B̂_ε + Π`, defined on the whole line.
    pub fn density_reg(&self, eps: f64, r: f64) -> Result<f64> {
        Ok(self.moreau_envelope(eps, r)? + self.pi_primitive(r))
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::Param(format!("Yosida parameter must be positive, got {}", eps)))
    }
}

fn log_bhat(r: f64) -> f64 {
    let plus = if r == -1.0 { 0.0 } else { (1.0 + r) * r.ln_1p() };
    let minus = if r == 1.0 { 0.0 } else { (1.0 - r) * (-r).ln_1p() };
    plus + minus
}

/// Free energy `∫ |∇φ|²/2 + B̂(φ) + Π(φ)`; the gradient term is the discrete
/// Dirichlet form of the Neumann Laplacian. Fails if any value leaves `D(β)`.
pub fn free_energy(phi: &Field, spec: &PotentialSpec, grid: &Grid) -> Result<f64> {
    let mut bulk = 0.0;
    for &v in phi.values() {
        bulk += spec.density(v)?;
    }
    Ok(0.5 * grid.dirichlet_form(phi, phi) + bulk * grid.cell_volume())
}

/// Free energy with `B̂` replaced by its Moreau envelope at level `eps`.
pub fn free_energy_reg(phi: &Field, spec: &PotentialSpec, grid: &Grid, eps: f64) -> Result<f64> {
    let mut bulk = 0.0;
    for &v in phi.values() {
        bulk += spec.density_reg(eps, v)?;
    }
    Ok(0.5 * grid.dirichlet_form(phi, phi) + bulk * grid.cell_volume())
}
