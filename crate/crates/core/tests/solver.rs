use std::f64::consts::PI;
use std::sync::Arc;

use chsmc_core::grid::{neumann_eigenbasis, Field, Grid, MuBoundaryCondition, SpaceTimeFn};
use chsmc_core::potentials::{free_energy_reg, PotentialSpec};
use chsmc_core::smc::SmcParams;
use chsmc_core::solver::{
    assemble_g_eps, run, step_coupled_neumann, step_eliminated_dirichlet, step_galerkin_neumann, GalerkinIntegrator,
    LinearBackend, ProblemData, Scheme, SolverConfig, StateSnapshot, TargetProfile,
};
use chsmc_core::Error;

/// Convex part of a "linear" test potential: `B̂ = 0`, `π = 0`.
fn zero_potential() -> PotentialSpec {
    use chsmc_core::potentials::{CustomPotential, Interval};
    PotentialSpec::custom(CustomPotential {
        bhat: Arc::new(|_| 0.0),
        beta: Arc::new(|_| 0.0),
        beta_prime: Some(Arc::new(|_| 0.0)),
        pi: Arc::new(|_| 0.0),
        pi_primitive: Arc::new(|_| 0.0),
        pi_lipschitz: 0.0,
        domain: Interval::real_line(),
    })
    .unwrap()
}

fn disc_eig(h: f64, k: usize, l: f64) -> f64 {
    (2.0 / (h * h)) * (1.0 - (PI * k as f64 * h / l).cos())
}

#[test]
fn linear_mode_follows_scalar_recursion() {
    let (n, l, tau, dt) = (64, 1.0, 0.5, 1e-3);
    let g = Grid::new(&[n], &[l]).unwrap();
    let k = 2;
    let lam = disc_eig(l / n as f64, k, l);
    let phi0 = Field::from_fn(&g, |x| 0.3 * (PI * k as f64 * x[0] / l).cos());
    let data = ProblemData::new(phi0.clone(), zero_potential(), MuBoundaryCondition::NeumannZeroFlux, tau);
    let cfg = SolverConfig::new(0.1, dt, 20.0 * dt, Scheme::CoupledNeumann).unwrap().with_output_every(dt);
    let traj = run(&data, &cfg).unwrap();
    let factor = 1.0 / (1.0 + dt * lam * lam / (1.0 + tau * lam));
    for (step, snap) in traj.snapshots.iter().enumerate() {
        let expect = phi0.scale(factor.powi(step as i32));
        assert!(snap.phi.sub(&expect).linf_norm() < 1e-10, "step {}", step);
    }
}

#[test]
fn uniform_state_is_stationary() {
    let g = Grid::new(&[16, 8], &[1.0, 0.5]).unwrap();
    for spec in [PotentialSpec::Regular, PotentialSpec::logarithmic(1.5).unwrap(), PotentialSpec::double_obstacle(1.0).unwrap()] {
        let data = ProblemData::new(Field::constant(&g, 0.3), spec, MuBoundaryCondition::NeumannZeroFlux, 1.0);
        let cfg = SolverConfig::new(0.01, 0.01, 0.1, Scheme::CoupledNeumann).unwrap();
        let traj = run(&data, &cfg).unwrap();
        let last = traj.final_state();
        assert!(last.phi.sub(&Field::constant(&g, 0.3)).linf_norm() < 1e-12);
    }
}

fn random_profile(g: &Grid, seed: u64, amp: f64, base: f64) -> Field {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let vals = (0..g.n_cells()).map(|_| base + amp * rng.gen_range(-1.0..1.0)).collect();
    Field::from_values(g, vals).unwrap()
}

#[test]
fn mass_is_conserved_for_nonlinear_runs() {
    let g = Grid::new(&[32, 16], &[1.0, 0.5]).unwrap();
    let phi0 = random_profile(&g, 7, 0.5, 0.1);
    let target: SpaceTimeFn = Arc::new(|x, t| 0.2 * (PI * x[0]).cos() * (1.0 + t));
    let data = ProblemData::new(phi0.clone(), PotentialSpec::Regular, MuBoundaryCondition::NeumannZeroFlux, 0.7)
        .with_forcing(Arc::new(|x, t| (3.0 * x[0] + t).sin()))
        .with_target(TargetProfile::new(target))
        .with_control(SmcParams::new(2.0, 0.05).unwrap());
    let cfg = SolverConfig::new(0.01, 2e-3, 0.1, Scheme::CoupledNeumann).unwrap();
    let traj = run(&data, &cfg).unwrap();
    let m0 = phi0.mean();
    for row in &traj.diagnostics.rows {
        assert!((row.mean_phi - m0).abs() <= 1e-12 * (1.0 + m0.abs()));
    }
}

#[test]
fn eliminated_dirichlet_zero_data_stays_zero() {
    let g = Grid::new(&[32], &[1.0]).unwrap();
    let data = ProblemData::new(Field::zeros(&g), zero_potential(), MuBoundaryCondition::homogeneous_dirichlet(), 1.0);
    let cfg = SolverConfig::new(0.01, 0.01, 0.1, Scheme::EliminatedDirichlet).unwrap();
    let traj = run(&data, &cfg).unwrap();
    assert_eq!(traj.final_state().phi.linf_norm(), 0.0);
}

#[test]
fn dirichlet_mu_recovery() {
    let g = Grid::new(&[48], &[1.0]).unwrap();
    let phi0 = Field::from_fn(&g, |x| 0.4 * (PI * x[0]).cos() + 0.1);
    let datum: SpaceTimeFn = Arc::new(|x, t| 0.3 + 0.2 * x[0] + 0.1 * t);
    let data = ProblemData::new(phi0.clone(), PotentialSpec::Regular, MuBoundaryCondition::Dirichlet(datum.clone()), 1.0);
    let cfg = SolverConfig::new(0.01, 0.01, 0.01, Scheme::EliminatedDirichlet).unwrap();
    let traj = run(&data, &cfg).unwrap();
    let s1 = traj.final_state();
    let mu_h = chsmc_core::grid::harmonic_extension(&g, &datum, 0.01).unwrap();
    // μ − μ_H = −𝒟(∂tφ), so Δ_D(μ − μ_H) = ∂tφ.
    let lhs = g.laplacian_dirichlet(&s1.mu.sub(&mu_h));
    let rhs = s1.phi.sub(&phi0).scale(1.0 / 0.01);
    let err = lhs.sub(&rhs).l2_norm();
    assert!(err <= 1e-8 * rhs.l2_norm().max(1.0), "{} vs {}", err, rhs.l2_norm());
}

#[test]
fn dirichlet_manufactured_solution_converges() {
    // φ(x,t) = e^{-t} cos(πx), τ = 1, regular potential, μ_Γ = 0, g = 0.
    let l = 1.0;
    let tau = 1.0;
    let t_final = 0.2;
    let mut errors = Vec::new();
    for &(n, dt) in &[(32usize, 4e-3), (64, 2e-3), (128, 1e-3)] {
        let g = Grid::new(&[n], &[l]).unwrap();
        // The source uses the continuous operators, so the error is O(dt + h²).
        let exact = move |x: &[f64; 3], t: f64| (-t).exp() * (PI * x[0] / l).cos();
        let d_cos = |x: f64| {
            // -u'' = cos(πx), u(0)=u(1)=0  ⇒  u = (cos(πx) - 1 + 2x)/π².
            ((PI * x).cos() - 1.0 + 2.0 * x) / (PI * PI)
        };
        let mms: SpaceTimeFn = Arc::new(move |x, t| {
            let e = (-t).exp();
            let phi = exact(x, t);
            // τ∂tφ + 𝒟∂tφ − Δφ + φ³ − φ
            tau * (-phi) + (-e) * d_cos(x[0]) + PI * PI * phi + phi.powi(3) - phi
        });
        let phi0 = Field::from_fn(&g, |x| exact(x, 0.0));
        let data = ProblemData::new(phi0, PotentialSpec::Regular, MuBoundaryCondition::homogeneous_dirichlet(), tau);
        let mut cfg = SolverConfig::new(1e-9, dt, t_final, Scheme::EliminatedDirichlet).unwrap();
        cfg.mms_source = Some(mms);
        let traj = run(&data, &cfg).unwrap();
        let err = traj.final_state().phi.sub(&Field::from_fn(&g, |x| exact(x, t_final))).l2_norm();
        errors.push(err);
    }
    assert!(errors[0] < 1e-2, "{:?}", errors);
    assert!(errors[1] < 0.6 * errors[0] && errors[2] < 0.6 * errors[1], "{:?}", errors);
}

#[test]
fn dirichlet_stationary_state_does_not_drift() {
    // The uniform root of β_ε(s) + π(s) = c solves -Δφ + β_ε(φ) + π(φ) = c;
    // one eliminated-Dirichlet step must leave it in place.
    let g = Grid::new(&[32], &[1.0]).unwrap();
    let c = 0.3;
    let spec = PotentialSpec::Regular;
    // Newton on the scalar equation for the uniform stationary profile.
    let mut s = 1.2;
    for _ in 0..50 {
        let f = spec.beta_eps(1e-3, s).unwrap() + spec.pi(s) - c;
        let fp = spec.beta_eps_prime(1e-3, s).unwrap() - 1.0;
        s -= f / fp;
    }
    let phi = Field::constant(&g, s);
    let datum: SpaceTimeFn = Arc::new(move |_, _| c);
    let data = ProblemData::new(phi.clone(), spec, MuBoundaryCondition::Dirichlet(datum), 1.0);
    let cfg = SolverConfig::new(1e-3, 0.01, 0.01, Scheme::EliminatedDirichlet).unwrap();
    let state = StateSnapshot { t: 0.0, phi: phi.clone(), mu: Field::zeros(&g), xi: Field::zeros(&g), zeta: Field::zeros(&g) };
    let next = step_eliminated_dirichlet(&state, &data, &cfg).unwrap();
    assert!(next.phi.sub(&phi).linf_norm() <= 1e-8);
    assert!(next.mu.sub(&Field::constant(&g, c)).linf_norm() <= 1e-6);
}

#[test]
fn galerkin_linear_mode_matches_recursion() {
    let (n, l, tau, dt) = (32, 1.0, 0.3, 2e-3);
    let g = Grid::new(&[n], &[l]).unwrap();
    let basis = neumann_eigenbasis(&g, 8).unwrap();
    let phi0 = basis.mode(3).scale(0.2).add(&basis.mode(5).scale(-0.1)).add(&Field::constant(&g, 0.05));
    let data = ProblemData::new(phi0.clone(), zero_potential(), MuBoundaryCondition::NeumannZeroFlux, tau);
    let scheme = Scheme::GalerkinNeumann { modes: 8, integrator: GalerkinIntegrator::BackwardEuler };
    let cfg = SolverConfig::new(0.1, dt, dt, scheme).unwrap();
    let c0 = basis.project(&phi0);
    let c1 = step_galerkin_neumann(&c0, 0.0, &data, &cfg).unwrap();
    for j in 0..8 {
        let lam = basis.eigenvalues()[j];
        let expect = c0[j] / (1.0 + dt * lam * lam / (1.0 + tau * lam));
        assert!((c1[j] - expect).abs() <= 1e-10 * c0[j].abs().max(1.0), "mode {}", j);
    }
    // Same per-mode recursion through the coupled stepper.
    let state = StateSnapshot { t: 0.0, phi: phi0.clone(), mu: Field::zeros(&g), xi: Field::zeros(&g), zeta: Field::zeros(&g) };
    let next = step_coupled_neumann(&state, &data, &cfg).unwrap();
    let cc = basis.project(&next.phi);
    for j in 0..8 {
        assert!((cc[j] - c1[j]).abs() <= 1e-10);
    }
}

#[test]
fn galerkin_single_mode_is_frozen() {
    let g = Grid::new(&[16], &[1.0]).unwrap();
    let data = ProblemData::new(Field::constant(&g, 0.4), zero_potential(), MuBoundaryCondition::NeumannZeroFlux, 1.0);
    for integrator in [GalerkinIntegrator::BackwardEuler, GalerkinIntegrator::Rk4] {
        let cfg = SolverConfig::new(0.1, 0.01, 0.01, Scheme::GalerkinNeumann { modes: 1, integrator }).unwrap();
        let c1 = step_galerkin_neumann(&[0.4], 0.0, &data, &cfg).unwrap();
        assert_eq!(c1, vec![0.4]);
    }
}

#[test]
fn galerkin_rk4_agrees_with_backward_euler_on_slow_modes() {
    let g = Grid::new(&[32], &[1.0]).unwrap();
    let phi0 = Field::from_fn(&g, |x| 0.1 + 0.3 * (PI * x[0]).cos());
    let data = ProblemData::new(phi0, PotentialSpec::Regular, MuBoundaryCondition::NeumannZeroFlux, 1.0);
    let run_with = |integrator, dt| {
        let cfg = SolverConfig::new(0.01, dt, 0.02, Scheme::GalerkinNeumann { modes: 6, integrator }).unwrap();
        run(&data, &cfg).unwrap().final_state().phi.clone()
    };
    let rk = run_with(GalerkinIntegrator::Rk4, 1e-5);
    let be = run_with(GalerkinIntegrator::BackwardEuler, 1e-4);
    let be2 = run_with(GalerkinIntegrator::BackwardEuler, 5e-5);
    // First-order BE error halves with dt and points at the RK4 solution.
    let e1 = be.sub(&rk).l2_norm();
    let e2 = be2.sub(&rk).l2_norm();
    assert!(e2 < 0.6 * e1, "{} {}", e1, e2);
}

#[test]
fn nonlinear_galerkin_tracks_coupled() {
    let g = Grid::new(&[64], &[1.0]).unwrap();
    let phi0 = Field::from_fn(&g, |x| 0.1 + 0.4 * (PI * x[0]).cos() + 0.1 * (2.0 * PI * x[0]).cos());
    let data = ProblemData::new(phi0, PotentialSpec::Regular, MuBoundaryCondition::NeumannZeroFlux, 1.0);
    let coupled = run(&data, &SolverConfig::new(0.01, 1e-3, 0.05, Scheme::CoupledNeumann).unwrap()).unwrap();
    let scheme = Scheme::GalerkinNeumann { modes: 32, integrator: GalerkinIntegrator::BackwardEuler };
    let gal = run(&data, &SolverConfig::new(0.01, 1e-3, 0.05, scheme).unwrap()).unwrap();
    let diff = coupled.final_state().phi.sub(&gal.final_state().phi).l2_norm();
    assert!(diff < 1e-4, "{}", diff);
}

#[test]
fn zero_horizon_gives_initial_snapshot_only() {
    let g = Grid::new(&[8], &[1.0]).unwrap();
    let data = ProblemData::new(Field::constant(&g, 0.1), PotentialSpec::Regular, MuBoundaryCondition::NeumannZeroFlux, 1.0);
    let cfg = SolverConfig::new(0.1, 0.1, 0.0, Scheme::CoupledNeumann).unwrap();
    let traj = run(&data, &cfg).unwrap();
    assert_eq!(traj.snapshots.len(), 1);
    assert_eq!(traj.snapshots[0].t, 0.0);
}

#[test]
fn output_frequency_is_passive() {
    let g = Grid::new(&[24], &[1.0]).unwrap();
    let phi0 = Field::from_fn(&g, |x| 0.3 * (PI * x[0]).cos());
    let data = ProblemData::new(phi0, PotentialSpec::logarithmic(1.5).unwrap(), MuBoundaryCondition::NeumannZeroFlux, 1.0);
    let base = SolverConfig::new(0.01, 0.01, 0.2, Scheme::CoupledNeumann).unwrap();
    let coarse = run(&data, &base.clone().with_output_every(0.1)).unwrap();
    let fine = run(&data, &base.with_output_every(0.05)).unwrap();
    for s in &coarse.snapshots {
        assert_eq!(&s.phi, &fine.snapshot_at(s.t).unwrap().phi);
    }
}

#[test]
fn backward_euler_self_convergence_is_first_order() {
    let g = Grid::new(&[32], &[1.0]).unwrap();
    let phi0 = Field::from_fn(&g, |x| 0.2 + 0.4 * (PI * x[0]).cos());
    let data = ProblemData::new(phi0, PotentialSpec::Regular, MuBoundaryCondition::NeumannZeroFlux, 1.0);
    let at = |dt: f64| run(&data, &SolverConfig::new(0.01, dt, 0.04, Scheme::CoupledNeumann).unwrap()).unwrap().final_state().phi.clone();
    let (a, b, c) = (at(4e-3), at(2e-3), at(1e-3));
    let ratio = a.sub(&b).l2_norm() / b.sub(&c).l2_norm();
    assert!((ratio - 2.0).abs() < 0.3, "{}", ratio);
}

#[test]
fn energy_plus_dissipation_is_nonincreasing() {
    let g = Grid::new(&[64], &[1.0]).unwrap();
    let phi0 = random_profile(&g, 11, 0.3, 0.0);
    for spec in [PotentialSpec::Regular, PotentialSpec::logarithmic(1.5).unwrap()] {
        let data = ProblemData::new(phi0.clone(), spec.clone(), MuBoundaryCondition::NeumannZeroFlux, 0.5);
        let cfg = SolverConfig::new(0.01, 1e-3, 0.05, Scheme::CoupledNeumann).unwrap();
        let traj = run(&data, &cfg).unwrap();
        let rows = &traj.diagnostics.rows;
        for w in rows.windows(2) {
            let before = w[0].free_energy_reg + w[0].dissipation;
            let after = w[1].free_energy_reg + w[1].dissipation;
            assert!(after <= before + 1e-9, "{} > {}", after, before);
        }
        let e0 = free_energy_reg(&phi0, &spec, &g, 0.01).unwrap();
        assert!((rows[0].free_energy_reg - e0).abs() < 1e-14);
    }
}

#[test]
fn zeta_is_saturated_by_rho() {
    let g = Grid::new(&[32], &[0.5]).unwrap();
    let phi0 = Field::from_fn(&g, |x| 0.2 + 0.5 * (2.0 * PI * x[0]).cos());
    let data = ProblemData::new(phi0, PotentialSpec::Regular, MuBoundaryCondition::homogeneous_dirichlet(), 1.0)
        .with_target(TargetProfile::constant(0.2))
        .with_control(SmcParams::new(3.0, 0.01).unwrap());
    let cfg = SolverConfig::new(0.01, 1e-3, 0.05, Scheme::EliminatedDirichlet).unwrap().with_output_every(0.01);
    let traj = run(&data, &cfg).unwrap();
    for s in &traj.snapshots {
        assert!(s.zeta.linf_norm() <= 3.0);
    }
}

#[test]
fn g_eps_assembly_matches_hand_computation() {
    let g = Grid::new(&[16], &[1.0]).unwrap();
    let phi = Field::from_fn(&g, |x| (3.0 * x[0]).sin());
    let mu = Field::from_fn(&g, |x| x[0] * x[0]);
    let target = TargetProfile::with_derivatives(
        Arc::new(|x, t| x[0] * t),
        Arc::new(|x, _| x[0]),
        Arc::new(|x, t| (x[0] + t).cos()),
    );
    let data = ProblemData::new(phi.clone(), PotentialSpec::Regular, MuBoundaryCondition::homogeneous_dirichlet(), 0.7)
        .with_forcing(Arc::new(|x, t| x[0] - t))
        .with_target(target);
    let state = StateSnapshot { t: 0.3, phi: phi.clone(), mu: mu.clone(), xi: Field::zeros(&g), zeta: Field::zeros(&g) };
    let ge = assemble_g_eps(&state, &data).unwrap();
    for i in 0..g.n_cells() {
        let x = g.cell_center(i)[0];
        let expect = mu.values()[i] + (x - 0.3) + phi.values()[i] - 0.7 * x + (x + 0.3).cos();
        assert!((ge.values()[i] - expect).abs() < 1e-14);
    }
    let trivial = ProblemData::new(Field::zeros(&g), zero_potential(), MuBoundaryCondition::homogeneous_dirichlet(), 1.0)
        .with_target(TargetProfile::constant(0.5));
    let s0 = StateSnapshot { t: 0.0, phi: Field::zeros(&g), mu: Field::zeros(&g), xi: Field::zeros(&g), zeta: Field::zeros(&g) };
    assert_eq!(assemble_g_eps(&s0, &trivial).unwrap().linf_norm(), 0.0);
    let missing = trivial.with_target(TargetProfile::new(Arc::new(|_, _| 0.5)));
    assert!(matches!(assemble_g_eps(&s0, &missing), Err(Error::MissingData(_))));
}

#[test]
fn cg_and_spectral_backends_agree() {
    let g = Grid::new(&[24, 12], &[1.0, 0.5]).unwrap();
    let phi0 = random_profile(&g, 5, 0.4, 0.1);
    for (bc, scheme) in [
        (MuBoundaryCondition::NeumannZeroFlux, Scheme::CoupledNeumann),
        (MuBoundaryCondition::homogeneous_dirichlet(), Scheme::EliminatedDirichlet),
    ] {
        let data = ProblemData::new(phi0.clone(), PotentialSpec::Regular, bc, 1.0);
        let mut cfg = SolverConfig::new(0.01, 1e-3, 5e-3, scheme).unwrap();
        let a = run(&data, &cfg).unwrap();
        cfg.backend = LinearBackend::Cg;
        let b = run(&data, &cfg).unwrap();
        assert!(a.final_state().phi.sub(&b.final_state().phi).linf_norm() < 1e-8);
    }
}

#[test]
fn scheme_and_boundary_condition_must_match() {
    let g = Grid::new(&[8], &[1.0]).unwrap();
    let data = ProblemData::new(Field::constant(&g, 0.1), PotentialSpec::Regular, MuBoundaryCondition::NeumannZeroFlux, 1.0);
    let cfg = SolverConfig::new(0.1, 0.1, 0.1, Scheme::EliminatedDirichlet).unwrap();
    assert!(matches!(run(&data, &cfg), Err(Error::Regime(_))));
    let bad_mean = ProblemData::new(
        Field::constant(&g, 1.0),
        PotentialSpec::double_obstacle(1.0).unwrap(),
        MuBoundaryCondition::NeumannZeroFlux,
        1.0,
    );
    let cfg = SolverConfig::new(0.1, 0.1, 0.1, Scheme::CoupledNeumann).unwrap();
    assert!(matches!(run(&bad_mean, &cfg), Err(Error::Domain { .. })));
}

#[test]
fn obstacle_run_conserves_mass_and_reports_overshoot() {
    let g = Grid::new(&[64], &[1.0]).unwrap();
    let phi0 = Field::from_fn(&g, |x| (1.5 * (PI * x[0]).cos()).clamp(-1.0, 1.0));
    let data = ProblemData::new(phi0.clone(), PotentialSpec::double_obstacle(2.0).unwrap(), MuBoundaryCondition::NeumannZeroFlux, 1.0);
    let cfg = SolverConfig::new(1e-2, 1e-3, 0.05, Scheme::CoupledNeumann).unwrap();
    let traj = run(&data, &cfg).unwrap();
    let m0 = phi0.mean();
    assert!(traj.diagnostics.rows.iter().all(|r| (r.mean_phi - m0).abs() <= 1e-12 * (1.0 + m0.abs())));
    assert!(traj.diagnostics.rows.iter().any(|r| r.overshoot > 0.0));
}
