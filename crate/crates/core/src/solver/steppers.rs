//! Backward-Euler steppers for the coupled Neumann and eliminated Dirichlet
//! formulations, and the Galerkin stepper in the Neumann eigenbasis.

use log::warn;

use crate::error::{Error, Result};
use crate::grid::{BoundaryKind, NeumannEigenbasis};
use crate::potentials::PotentialSpec;

use super::newton::{self, NewtonSettings, NewtonSystem};
use super::ops::{dot, project_mean_free, Ops};

/// What a single step produces, as raw cell vectors.
pub(crate) struct StepOutput {
    pub phi: Vec<f64>,
    pub mu: Vec<f64>,
    pub xi: Vec<f64>,
    pub newton_iters: usize,
}

/// Time-explicit parts of the step, evaluated by the caller: `π(φⁿ) + ζ − f`
/// with `f` the total forcing at `tⁿ⁺¹`.
pub(crate) struct Explicit {
    pub rhs: Vec<f64>,
}

fn nonlinear(spec: &PotentialSpec, eps: f64, phi: &[f64], b: &mut [f64], d: &mut [f64]) -> Result<()> {
    for i in 0..phi.len() {
        let (v, p) = spec.beta_eps_and_prime(eps, phi[i])?;
        b[i] = v;
        d[i] = p;
    }
    Ok(())
}

/// Residual in the increment `δ = φⁿ⁺¹ − φⁿ`:
/// `(τδ + Kδ)/dt − Δ_N(φⁿ + δ) + β_ε(φⁿ + δ) + explicit`, with `K = 𝒩` on
/// mean-free increments (the residual is then projected) or `K = 𝒟`.
struct IncrementSystem<'a> {
    ops: &'a Ops,
    spec: &'a PotentialSpec,
    kind: BoundaryKind,
    eps: f64,
    tau: f64,
    dt: f64,
    phi: &'a [f64],
    explicit: &'a [f64],
    // Cached at the last residual evaluation.
    b: Vec<f64>,
    d: Vec<f64>,
    d_mean: f64,
    k_delta: Vec<f64>,
    scale: f64,
    work: Vec<f64>,
}

impl<'a> IncrementSystem<'a> {
    fn inverse(&self, v: &[f64]) -> Vec<f64> {
        let r = match self.kind {
            BoundaryKind::Neumann => self.ops.inv_neumann(v),
            BoundaryKind::Dirichlet => self.ops.inv_dirichlet(v),
        };
        // The spectral path cannot fail; the CG path only on breakdown, which
        // the outer residual check then reports.
        r.unwrap_or_else(|_| vec![f64::NAN; v.len()])
    }
}

impl NewtonSystem for IncrementSystem<'_> {
    fn residual(&mut self, delta: &[f64], out: &mut [f64]) -> Result<()> {
        let n = delta.len();
        let phi_new: Vec<f64> = self.phi.iter().zip(delta).map(|(a, b)| a + b).collect();
        nonlinear(self.spec, self.eps, &phi_new, &mut self.b, &mut self.d)?;
        self.d_mean = self.d.iter().sum::<f64>() / n as f64;
        self.ops.laplacian_neumann(&phi_new, &mut self.work);
        self.k_delta = self.inverse(delta);
        let mut scale: f64 = 0.0;
        for i in 0..n {
            let inertia = (self.tau * delta[i] + self.k_delta[i]) / self.dt;
            out[i] = inertia - self.work[i] + self.b[i] + self.explicit[i];
            scale = scale.max(inertia.abs()).max(self.work[i].abs()).max(self.b[i].abs()).max(self.explicit[i].abs());
        }
        if self.kind == BoundaryKind::Neumann {
            project_mean_free(out);
        }
        self.scale = scale * self.ops.grid.volume().sqrt();
        Ok(())
    }

    fn apply_jacobian(&self, v: &[f64], out: &mut [f64]) {
        self.ops.laplacian_neumann(v, out);
        let kv = self.inverse(v);
        for i in 0..v.len() {
            out[i] = (self.tau * v[i] + kv[i]) / self.dt - out[i] + self.d[i] * v[i];
        }
    }

    fn precondition(&self, r: &[f64], out: &mut [f64]) {
        let shift = self.tau / self.dt + self.d_mean;
        let dt = self.dt;
        let z = match self.kind {
            BoundaryKind::Neumann => {
                self.ops.cos_symbol(r, |l| if l > 0.0 { 1.0 / (shift + 1.0 / (dt * l) + l) } else { 0.0 })
            }
            BoundaryKind::Dirichlet => self.ops.cos_symbol(r, |l| 1.0 / (shift + l)),
        };
        out.copy_from_slice(&z);
    }

    fn norm(&self, r: &[f64]) -> f64 {
        self.ops.l2(r)
    }

    fn scale(&self) -> f64 {
        self.scale
    }

    fn mean_free(&self) -> bool {
        self.kind == BoundaryKind::Neumann
    }
}

/// One backward-Euler step of the increment formulation. Returns `φⁿ⁺¹`,
/// `μⁿ⁺¹ − μ_H` (with the mean recovered in the Neumann case) and `ξ`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn increment_step(
    ops: &Ops,
    spec: &PotentialSpec,
    kind: BoundaryKind,
    eps: f64,
    tau: f64,
    dt: f64,
    phi: &[f64],
    explicit: &Explicit,
    settings: NewtonSettings,
) -> Result<StepOutput> {
    let n = phi.len();
    let mut sys = IncrementSystem {
        ops,
        spec,
        kind,
        eps,
        tau,
        dt,
        phi,
        explicit: &explicit.rhs,
        b: vec![0.0; n],
        d: vec![0.0; n],
        d_mean: 0.0,
        k_delta: vec![0.0; n],
        scale: 0.0,
        work: vec![0.0; n],
    };
    let mut delta = vec![0.0; n];
    let res = newton::solve(&mut sys, &mut delta, settings)?;
    if kind == BoundaryKind::Neumann {
        project_mean_free(&mut delta);
    }
    // Make the caches match the final increment exactly.
    let mut r = vec![0.0; n];
    sys.residual(&delta, &mut r)?;
    let phi_new: Vec<f64> = phi.iter().zip(&delta).map(|(a, b)| a + b).collect();
    let mut mu: Vec<f64> = sys.k_delta.iter().map(|v| -v / dt).collect();
    if kind == BoundaryKind::Neumann {
        // Spatial average of the second equation.
        let m = sys.b.iter().zip(&explicit.rhs).map(|(b, e)| b + e).sum::<f64>() / n as f64;
        mu.iter_mut().for_each(|v| *v += m);
    }
    Ok(StepOutput { phi: phi_new, mu, xi: sys.b, newton_iters: res.iterations })
}

/// Galerkin system in the mean-free modal increments `d_j`, `j ≥ 2`, divided
/// by `λ_j`: `(1/λ + τ) d/dt + λ(c + d) + P_n β_ε(Σ(c + d)) + explicit`.
struct GalerkinSystem<'a> {
    basis: &'a NeumannEigenbasis,
    spec: &'a PotentialSpec,
    eps: f64,
    tau: f64,
    dt: f64,
    coeffs: &'a [f64],
    explicit: &'a [f64],
    d: Vec<f64>,
    d_mean: f64,
    b_proj: Vec<f64>,
    scale: f64,
    xi: Vec<f64>,
}

impl GalerkinSystem<'_> {
    fn lam(&self, j: usize) -> f64 {
        self.basis.eigenvalues()[j]
    }

    fn full(&self, v: &[f64], first: f64) -> Vec<f64> {
        let mut c = Vec::with_capacity(v.len() + 1);
        c.push(first);
        c.extend_from_slice(v);
        c
    }
}

impl NewtonSystem for GalerkinSystem<'_> {
    fn residual(&mut self, inc: &[f64], out: &mut [f64]) -> Result<()> {
        let new: Vec<f64> = (0..inc.len()).map(|k| self.coeffs[k + 1] + inc[k]).collect();
        let phi = self.basis.synthesize(&self.full(&new, self.coeffs[0]));
        let n = phi.len();
        let mut b = vec![0.0; n];
        self.d.resize(n, 0.0);
        nonlinear(self.spec, self.eps, phi.values(), &mut b, &mut self.d)?;
        self.d_mean = self.d.iter().sum::<f64>() / n as f64;
        self.b_proj = self.basis.project(&crate::grid::Field::from_values(phi.grid(), b.clone())?);
        self.xi = b;
        let mut scale: f64 = 0.0;
        for k in 0..inc.len() {
            let j = k + 1;
            let l = self.lam(j);
            let inertia = (1.0 / l + self.tau) * inc[k] / self.dt;
            out[k] = inertia + l * new[k] + self.b_proj[j] + self.explicit[j];
            scale = scale.max(inertia.abs()).max((l * new[k]).abs()).max(self.b_proj[j].abs());
        }
        self.scale = scale * (inc.len() as f64).sqrt();
        Ok(())
    }

    fn apply_jacobian(&self, v: &[f64], out: &mut [f64]) {
        let field = self.basis.synthesize(&self.full(v, 0.0));
        let weighted = field.zip_map(
            &crate::grid::Field::from_values(field.grid(), self.d.clone()).expect("finite derivative"),
            |a, b| a * b,
        );
        let p = self.basis.project(&weighted);
        for k in 0..v.len() {
            let l = self.lam(k + 1);
            out[k] = ((1.0 / l + self.tau) / self.dt + l) * v[k] + p[k + 1];
        }
    }

    fn precondition(&self, r: &[f64], out: &mut [f64]) {
        for k in 0..r.len() {
            let l = self.lam(k + 1);
            out[k] = r[k] / ((1.0 / l + self.tau) / self.dt + l + self.d_mean);
        }
    }

    fn norm(&self, r: &[f64]) -> f64 {
        dot(r, r).sqrt()
    }

    fn scale(&self) -> f64 {
        self.scale
    }

    fn mean_free(&self) -> bool {
        false
    }
}

pub(crate) struct GalerkinOutput {
    pub coeffs: Vec<f64>,
    /// Modal coefficients of `μ`.
    pub mu: Vec<f64>,
    pub xi: Vec<f64>,
    pub newton_iters: usize,
}

/// Backward-Euler Galerkin step; `explicit` holds the modal projection of
/// `π(φⁿ) + ζ − f`. Mode 1 (`λ₁ = 0`) is left unchanged.
#[allow(clippy::too_many_arguments)]
pub(crate) fn galerkin_be_step(
    basis: &NeumannEigenbasis,
    spec: &PotentialSpec,
    eps: f64,
    tau: f64,
    dt: f64,
    coeffs: &[f64],
    explicit: &[f64],
    settings: NewtonSettings,
) -> Result<GalerkinOutput> {
    let m = coeffs.len();
    let mut sys = GalerkinSystem {
        basis,
        spec,
        eps,
        tau,
        dt,
        coeffs,
        explicit,
        d: Vec::new(),
        d_mean: 0.0,
        b_proj: Vec::new(),
        scale: 0.0,
        xi: Vec::new(),
    };
    let mut inc = vec![0.0; m - 1];
    let res = if m > 1 {
        newton::solve(&mut sys, &mut inc, settings)?
    } else {
        newton::NewtonResult { iterations: 0 }
    };
    let mut r = vec![0.0; m - 1];
    sys.residual(&inc, &mut r)?;
    let mut new = coeffs.to_vec();
    let mut mu = vec![0.0; m];
    // μ_1 from the e₁-component of the second equation, μ_j = -c_j'/λ_j.
    mu[0] = sys.b_proj[0] + explicit[0];
    for k in 0..m - 1 {
        new[k + 1] += inc[k];
        mu[k + 1] = -inc[k] / (dt * basis.eigenvalues()[k + 1]);
    }
    Ok(GalerkinOutput { coeffs: new, mu, xi: sys.xi, newton_iters: res.iterations })
}

/// Right-hand side of `c' = -(I + τA)⁻¹ A (A c + P_n(β_ε + π + σ − f))` for
/// the explicit Galerkin integrator; `forcing` is the projection of
/// `π(φ) + σ − f` at the stage, `b_proj` that of `β_ε(φ)`.
pub(crate) fn galerkin_rhs(lams: &[f64], tau: f64, c: &[f64], b_proj: &[f64], forcing: &[f64]) -> Vec<f64> {
    (0..c.len())
        .map(|j| {
            let l = lams[j];
            if l == 0.0 {
                0.0
            } else {
                -l / (1.0 + tau * l) * (l * c[j] + b_proj[j] + forcing[j])
            }
        })
        .collect()
}

/// Warns once per run if an explicit Galerkin step is outside the RK4
/// stability region of the stiffest retained mode.
pub(crate) fn warn_rk4_stiffness(lams: &[f64], tau: f64, dt: f64) {
    if let Some(&l) = lams.last() {
        let q = dt * l * l / (1.0 + tau * l);
        if q > 2.0 {
            warn!("Galerkin RK4 is stiff: dt*lambda_n^2/(1+tau*lambda_n) = {:.3e} > 2", q);
        }
    }
}

pub(crate) fn attach_time(e: Error, t: f64) -> Error {
    match e {
        Error::Newton { residual, iterations, .. } => Error::Newton { t, residual, iterations },
        other => other,
    }
}
