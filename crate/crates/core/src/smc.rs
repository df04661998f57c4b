//! Sliding-mode nonlinearity, comparison ODE and gain design.

use crate::error::{Error, Result};
use crate::grid::Field;

/// Control gain `ρ` and Yosida level `ε` of the sign nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmcParams {
    pub rho: f64,
    pub eps: f64,
}

impl SmcParams {
    /// `rho = 0` is accepted and switches the control off.
    pub fn new(rho: f64, eps: f64) -> Result<Self> {
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(Error::Param(format!("control gain must be nonnegative, got {}", rho)));
        }
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Param(format!("eps must be positive, got {}", eps)));
        }
        Ok(SmcParams { rho, eps })
    }

    pub fn off(eps: f64) -> Self {
        SmcParams { rho: 0.0, eps }
    }

    /// `ρ sign_ε(r)`.
    pub fn s_eps(&self, r: f64) -> f64 {
        self.rho * sign_eps(self.eps, r)
    }

    /// Derivative of `ρ sign_ε` (a.e.).
    pub fn s_eps_prime(&self, r: f64) -> f64 {
        if r.abs() < self.eps {
            self.rho / self.eps
        } else {
            0.0
        }
    }
}

/// Yosida approximation of `sign`: `clamp(r/ε, -1, 1)`.
pub fn sign_eps(eps: f64, r: f64) -> f64 {
    (r / eps).clamp(-1.0, 1.0)
}

/// `ŝ_ε(r) = ∫₀^r ρ sign_ε`.
pub fn hat_s_eps(eps: f64, rho: f64, r: f64) -> f64 {
    let a = r.abs();
    if a <= eps {
        rho * a * a / (2.0 * eps)
    } else {
        rho * (a - 0.5 * eps)
    }
}

/// Pointwise `ρ sign_ε(χ)`.
pub fn apply_s_eps(params: &SmcParams, chi: &Field) -> Field {
    chi.map(|v| params.s_eps(v))
}

fn check_drift(m: f64, rho: f64, tau: f64) -> Result<()> {
    if !(m >= 0.0) {
        return Err(Error::Param(format!("drift M must be nonnegative, got {}", m)));
    }
    if !(rho > m) {
        return Err(Error::Param(format!("need rho > M, got rho = {}, M = {}", rho, m)));
    }
    if !(tau > 0.0) {
        return Err(Error::Param(format!("tau must be positive, got {}", tau)));
    }
    Ok(())
}

/// Solution `w(t) = (w0 - (ρ-M) t / τ)⁺` of `τ w' + ρ sign w ∋ M`.
pub fn ode_w_closed_form(w0: f64, m: f64, rho: f64, tau: f64, t: f64) -> Result<f64> {
    check_drift(m, rho, tau)?;
    if !(w0 >= 0.0) || !(t >= 0.0) {
        return Err(Error::Param(format!("need w0 >= 0 and t >= 0, got w0 = {}, t = {}", w0, t)));
    }
    Ok((w0 - (rho - m) / tau * t).max(0.0))
}

/// Regularized solution from `w_ε(0) = 0`: `(εM/ρ)(1 - exp(-ρt/(ετ)))`.
pub fn ode_weps_closed_form_zero(eps: f64, m: f64, rho: f64, tau: f64, t: f64) -> Result<f64> {
    check_drift(m, rho, tau)?;
    Ok(eps * m / rho * (1.0 - (-rho * t / (eps * tau)).exp()))
}

/// Sampled trajectory of the regularized comparison ODE.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub w: Vec<f64>,
}

/// Integrates `τ w_ε' + ρ sign_ε(w_ε) = M`, `w_ε(0) = w0`, with classical RK4,
/// reporting at multiples of `dt` up to `horizon`. The internal step is
/// refined so that `ρ h / (ε τ) ≤ 1/2`.
pub fn ode_weps_integrate(
    eps: f64,
    m: f64,
    rho: f64,
    tau: f64,
    w0: f64,
    dt: f64,
    horizon: f64,
) -> Result<TimeSeries> {
    check_drift(m, rho, tau)?;
    if !(eps > 0.0) || !(dt > 0.0) || !(horizon >= 0.0) || !(w0 >= 0.0) {
        return Err(Error::Param("need eps > 0, dt > 0, T >= 0 and w0 >= 0".into()));
    }
    if w0 > 0.0 && eps >= w0 {
        return Err(Error::Param(format!("need eps in (0, w0) for w0 > 0, got eps = {}, w0 = {}", eps, w0)));
    }
    let substeps = ((rho * dt / (eps * tau)) / 0.5).ceil().max(1.0) as usize;
    let h = dt / substeps as f64;
    let rhs = |w: f64| (m - rho * sign_eps(eps, w)) / tau;
    let n_out = (horizon / dt + 1e-9).floor() as usize;
    let mut t = Vec::with_capacity(n_out + 1);
    let mut w = Vec::with_capacity(n_out + 1);
    let mut cur = w0;
    t.push(0.0);
    w.push(cur);
    for k in 1..=n_out {
        for _ in 0..substeps {
            let k1 = rhs(cur);
            let k2 = rhs(cur + 0.5 * h * k1);
            let k3 = rhs(cur + 0.5 * h * k2);
            let k4 = rhs(cur + h * k3);
            cur += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        t.push(k as f64 * dt);
        w.push(cur);
    }
    Ok(TimeSeries { t, w })
}

/// `T* = τ w0 / (ρ - M)`.
pub fn sliding_time(w0: f64, m: f64, rho: f64, tau: f64) -> Result<f64> {
    check_drift(m, rho, tau)?;
    Ok(tau * w0 / (rho - m))
}

/// Whether `ρ > M + τ w0 / T`, i.e. `T* < T` strictly.
pub fn gain_condition_holds(w0: f64, m: f64, rho: f64, tau: f64, horizon: f64) -> bool {
    rho > m + tau * w0 / horizon
}

/// Gain-design ledger built from the structural constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlidingDesign {
    pub w0: f64,
    pub betastar: f64,
    pub cstr: f64,
    pub chat: f64,
    pub vol: f64,
    pub tau: f64,
    pub horizon: f64,
    /// Volume threshold `δ*`.
    pub deltastar: f64,
    /// Threshold gain `ρ*`.
    pub rhostar: f64,
}

/// Quantities fixed once a gain `ρ` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainChoice {
    pub rho: f64,
    pub drift: f64,
    pub tstar: f64,
}

impl SlidingDesign {
    /// `C_str |Ω|^{2/3} (|Ω|^{2/3} + 1)`.
    pub fn volume_factor(&self) -> f64 {
        volume_factor(self.cstr, self.vol)
    }

    /// `M(ρ) = C_str |Ω|^{2/3}(|Ω|^{2/3}+1) ρ + Ĉ + β*`.
    pub fn drift(&self, rho: f64) -> f64 {
        self.volume_factor() * rho + self.chat + self.betastar
    }

    /// Evaluates the drift and the sliding time for a gain `rho > ρ*`.
    pub fn select_gain(&self, rho: f64) -> Result<GainChoice> {
        if !(rho > self.rhostar) {
            return Err(Error::Param(format!("gain {} does not exceed rho* = {}", rho, self.rhostar)));
        }
        let drift = self.drift(rho);
        let tstar = sliding_time(self.w0, drift, rho, self.tau)?;
        Ok(GainChoice { rho, drift, tstar })
    }
}

fn volume_factor(cstr: f64, vol: f64) -> f64 {
    let v23 = vol.powf(2.0 / 3.0);
    cstr * v23 * (v23 + 1.0)
}

/// `δ* = |(√(1 + 4/C_str) - 1)/2|^{3/2}`.
pub fn volume_threshold(cstr: f64) -> f64 {
    (((1.0 + 4.0 / cstr).sqrt() - 1.0) / 2.0).abs().powf(1.5)
}

/// Computes `δ*` and `ρ*`; fails with a volume error unless `|Ω| < δ*`.
pub fn design_parameters(
    chat: f64,
    cstr: f64,
    betastar: f64,
    tau: f64,
    w0: f64,
    horizon: f64,
    vol: f64,
) -> Result<SlidingDesign> {
    if !(cstr > 0.0) || !(tau > 0.0) || !(horizon > 0.0) || !(vol > 0.0) {
        return Err(Error::Param("need C_str > 0, tau > 0, T > 0 and |Omega| > 0".into()));
    }
    if !(chat >= 0.0) || !(betastar >= 0.0) || !(w0 >= 0.0) {
        return Err(Error::Param("need C_hat, beta*, w0 nonnegative".into()));
    }
    let deltastar = volume_threshold(cstr);
    let kappa = volume_factor(cstr, vol);
    if !(vol < deltastar) || !(kappa < 1.0) {
        return Err(Error::Volume { volume: vol, threshold: deltastar });
    }
    let rhostar = (chat + betastar + tau * w0 / horizon) / (1.0 - kappa);
    Ok(SlidingDesign { w0, betastar, cstr, chat, vol, tau, horizon, deltastar, rhostar })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use proptest::prelude::*;

    #[test]
    fn sign_eps_examples() {
        assert_eq!(sign_eps(0.1, 0.0), 0.0);
        assert!((sign_eps(0.1, 0.05) - 0.5).abs() < 1e-15);
        assert_eq!(sign_eps(0.1, -3.0), -1.0);
    }

    /// Resolvent of `∂|·|` at level ε is soft thresholding; the Yosida
    /// approximation is then `(r - J r)/ε`.
    fn soft_threshold(eps: f64, r: f64) -> f64 {
        r.signum() * (r.abs() - eps).max(0.0)
    }

    #[test]
    fn sign_eps_is_yosida_of_sign() {
        for &r in &[-3.0, -0.1, -0.04, 0.0, 0.02, 0.05, 0.1, 0.7] {
            let j = soft_threshold(0.1, r);
            let y = (r - j) / 0.1;
            assert!((y - sign_eps(0.1, r)).abs() < 1e-14);
            assert!((j + 0.1 * sign_eps(0.1, r) - r).abs() < 1e-15);
        }
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn hat_s_eps_examples() {
        assert_eq!(hat_s_eps(0.1, 2.0, 0.0), 0.0);
        assert!((hat_s_eps(0.1, 2.0, 1.0) - 1.9).abs() < 1e-14);
        // Quadrature of the clamp, split at the kink so Simpson is exact.
        let q = simpson(|s| 2.0 * sign_eps(0.1, s), 0.0, 0.1, 2) + simpson(|s| 2.0 * sign_eps(0.1, s), 0.1, 1.0, 2);
        assert!((q - 1.9).abs() < 1e-14);
    }

    #[test]
    fn apply_s_eps_examples() {
        let g = Grid::new(&[5], &[1.0]).unwrap();
        let p = SmcParams::new(3.0, 0.1).unwrap();
        assert_eq!(apply_s_eps(&p, &Field::zeros(&g)).linf_norm(), 0.0);
        let sat = apply_s_eps(&p, &Field::constant(&g, 5.0));
        assert!(sat.values().iter().all(|&v| v == 3.0));
        let chi = Field::from_fn(&g, |x| (x[0] - 0.5) * 0.3);
        let out = apply_s_eps(&p, &chi);
        for (c, o) in chi.values().iter().zip(out.values()) {
            assert_eq!(*o, 3.0 * sign_eps(0.1, *c));
            assert!(o.abs() <= 3.0);
        }
    }

    #[test]
    fn closed_form_examples() {
        assert!((ode_w_closed_form(2.0, 1.0, 5.0, 1.0, 0.25).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(ode_w_closed_form(2.0, 1.0, 5.0, 1.0, 0.5).unwrap(), 0.0);
        assert_eq!(ode_w_closed_form(2.0, 1.0, 5.0, 1.0, 3.0).unwrap(), 0.0);
        assert_eq!(ode_w_closed_form(0.0, 0.5, 2.0, 1.0, 0.1).unwrap(), 0.0);
        assert!(matches!(ode_w_closed_form(1.0, 2.0, 2.0, 1.0, 0.1), Err(Error::Param(_))));

        assert_eq!(ode_weps_closed_form_zero(0.1, 1.0, 5.0, 1.0, 0.0).unwrap(), 0.0);
        let v = ode_weps_closed_form_zero(0.1, 1.0, 5.0, 1.0, 0.02).unwrap();
        assert!((v - 0.02 * (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((v - 0.012642).abs() < 1e-6);
        let far = ode_weps_closed_form_zero(0.1, 1.0, 5.0, 1.0, 100.0).unwrap();
        assert!((far - 0.02).abs() < 1e-15 && far < 0.1);
    }

    #[test]
    fn sliding_time_examples() {
        assert!((sliding_time(2.0, 1.0, 5.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(sliding_time(0.0, 1.0, 5.0, 1.0).unwrap(), 0.0);
        assert!(sliding_time(1.0, 5.0, 5.0, 1.0).is_err());
        // rho = M + τ w0 / T exactly: T* = T, not strictly before the horizon.
        let (w0, m, tau, horizon) = (2.0, 1.0, 1.0, 0.5);
        let rho = m + tau * w0 / horizon;
        assert_eq!(sliding_time(w0, m, rho, tau).unwrap(), horizon);
        assert!(!gain_condition_holds(w0, m, rho, tau, horizon));
        assert!(gain_condition_holds(w0, m, rho * 1.01, tau, horizon));
    }

    #[test]
    fn integrate_matches_zero_closed_form() {
        let ts = ode_weps_integrate(0.1, 1.0, 5.0, 1.0, 0.0, 1e-4, 0.5).unwrap();
        for (t, w) in ts.t.iter().zip(&ts.w) {
            let exact = ode_weps_closed_form_zero(0.1, 1.0, 5.0, 1.0, *t).unwrap();
            assert!((w - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn integrate_affine_branch_and_range() {
        let ts = ode_weps_integrate(0.01, 1.0, 5.0, 1.0, 2.0, 1e-3, 1.0).unwrap();
        for k in 1..ts.t.len() {
            assert!(ts.w[k] <= ts.w[k - 1] + 1e-15);
            assert!(ts.w[k] >= 0.0 && ts.w[k] <= 2.0);
            if ts.w[k] > 0.01 {
                let slope = (ts.w[k] - ts.w[k - 1]) / 1e-3;
                assert!((slope + 4.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn integrate_rejects_bad_params() {
        assert!(ode_weps_integrate(0.1, 5.0, 5.0, 1.0, 1.0, 1e-3, 1.0).is_err());
        assert!(ode_weps_integrate(2.0, 1.0, 5.0, 1.0, 1.0, 1e-3, 1.0).is_err());
    }

    #[test]
    fn design_examples() {
        let d = design_parameters(0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.1).unwrap();
        let expected = ((5f64.sqrt() - 1.0) / 2.0).powf(1.5);
        assert!((d.deltastar - expected).abs() < 1e-15);
        assert!((d.deltastar - 0.4859).abs() < 1e-4);

        // Volume with C_str x (x + 1) = 0.999, x = |Ω|^{2/3}.
        let x = (-1.0 + (1.0f64 + 4.0 * 0.999).sqrt()) / 2.0;
        let vol = x.powf(1.5);
        let (chat, betastar, tau, w0, horizon) = (0.3, 0.2, 1.0, 0.5, 2.0);
        let d = design_parameters(chat, 1.0, betastar, tau, w0, horizon, vol).unwrap();
        let num = chat + betastar + tau * w0 / horizon;
        assert!((d.rhostar / (1000.0 * num) - 1.0).abs() < 1e-9);

        let g = d.select_gain(2.0 * d.rhostar).unwrap();
        assert!(g.rho - g.drift - tau * w0 / horizon > 0.0);
        assert!(g.tstar < horizon);
        assert!(d.select_gain(d.rhostar).is_err());
    }

    #[test]
    fn design_rejects_large_volume() {
        let dstar = volume_threshold(1.0);
        assert!(matches!(
            design_parameters(0.0, 1.0, 0.0, 1.0, 1.0, 1.0, dstar * 1.0001),
            Err(Error::Volume { .. })
        ));
        assert!(matches!(design_parameters(0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0), Err(Error::Volume { .. })));
    }

    proptest! {
        #[test]
        fn sign_eps_properties(eps in 1e-3f64..2.0, r in -5.0f64..5.0, s in -5.0f64..5.0) {
            prop_assert_eq!(sign_eps(eps, -r), -sign_eps(eps, r));
            prop_assert!(sign_eps(eps, r).abs() <= 1.0);
            prop_assert!((sign_eps(eps, r) - sign_eps(eps, s)).abs() <= (r - s).abs() / eps + 1e-12);
            if r <= s { prop_assert!(sign_eps(eps, r) <= sign_eps(eps, s)); }
        }

        #[test]
        fn hat_s_eps_bounds_and_antiderivative(eps in 1e-2f64..1.0, rho in 0.1f64..10.0, r in -3.0f64..3.0) {
            let v = hat_s_eps(eps, rho, r);
            prop_assert!(v >= 0.0 && v <= rho * r.abs() + 1e-15);
            prop_assert_eq!(v, hat_s_eps(eps, rho, -r));
            // Piecewise-exact Simpson quadrature split at the kink.
            let f = |s: f64| rho * sign_eps(eps, s);
            let a = r.abs();
            let q = if a <= eps { simpson(f, 0.0, a, 2) } else { simpson(f, 0.0, eps, 2) + simpson(f, eps, a, 2) };
            prop_assert!((q - v).abs() <= 1e-10 * (1.0 + v));
        }

        #[test]
        fn gain_above_threshold_beats_drift(chat in 0.0f64..5.0, cstr in 0.01f64..5.0, betastar in 0.0f64..3.0,
                                            tau in 0.1f64..3.0, w0 in 0.0f64..2.0, horizon in 0.1f64..5.0,
                                            frac in 0.01f64..0.99, factor in 1.0001f64..10.0) {
            let vol = frac * volume_threshold(cstr);
            let d = design_parameters(chat, cstr, betastar, tau, w0, horizon, vol).unwrap();
            let rho = factor * d.rhostar.max(1e-12);
            let margin = rho - d.drift(rho) - tau * w0 / horizon;
            prop_assert!(margin > -1e-12 * rho.max(1.0));
        }
    }
}
