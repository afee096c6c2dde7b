use kinex_core::metrics::total_income;
use kinex_core::sde::{find_equilibrium, run_ensemble, run_ensemble_with_workers, run_trajectory};
use kinex_core::{ClassSystem, NoiseKind, SdeConfig, StateVector};

fn cfg(noise: NoiseKind, sqrt_gamma: f64, steps: u64, sample_every: u64) -> SdeConfig {
    SdeConfig {
        dt: 1.0,
        sqrt_gamma,
        steps,
        noise,
        seed: 5,
        sample_every,
        ..SdeConfig::default()
    }
}

fn equilibrium(sys: &ClassSystem) -> StateVector {
    find_equilibrium(&StateVector::vertex(sys.n(), 3).unwrap(), sys, 1.0, 1e-13, 2_000_000)
        .unwrap()
        .into_converged()
        .unwrap()
}

#[test]
fn every_noise_kind_stays_on_the_simplex() {
    let sys = ClassSystem::default();
    let x0 = equilibrium(&sys);
    let mu0 = total_income(&x0, sys.incomes());
    for noise in [
        NoiseKind::None,
        NoiseKind::Additive,
        NoiseKind::Multiplicative,
        NoiseKind::ConservingAdditive,
    ] {
        let traj = run_trajectory(&x0, &sys, &cfg(noise, 1e-4, 20_000, 1)).unwrap();
        assert_eq!(traj.len(), 20_001);
        for x in &traj.states {
            assert!((x.sum() - 1.0).abs() < 1e-10, "{noise:?}");
            assert!(x.as_slice().iter().all(|v| *v >= 0.0));
            if noise == NoiseKind::ConservingAdditive {
                assert!((total_income(x, sys.incomes()) - mu0).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn conserving_noise_keeps_income_at_large_amplitude() {
    let sys = ClassSystem::default();
    let x0 = equilibrium(&sys);
    let mu0 = total_income(&x0, sys.incomes());
    let traj = run_trajectory(&x0, &sys, &cfg(NoiseKind::ConservingAdditive, 1e-3, 20_000, 10)).unwrap();
    let worst = traj
        .states
        .iter()
        .map(|x| (total_income(x, sys.incomes()) - mu0).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-8, "{worst:e}");
}

#[test]
fn noiseless_run_reaches_the_equilibrium() {
    let sys = ClassSystem::new(10, 10.0, 1.0).unwrap();
    let x0 = StateVector::vertex(10, 3).unwrap();
    let traj = run_trajectory(&x0, &sys, &cfg(NoiseKind::Additive, 0.0, 20_000, 100)).unwrap();
    assert_eq!(traj.len(), 201);
    assert_eq!(traj.rejected_steps, 0);
    assert_eq!(traj.fallback_steps, 0);
    let eq = equilibrium(&sys);
    for (a, b) in traj.last().as_slice().iter().zip(eq.as_slice()) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn equilibrium_step_is_a_fixed_point() {
    let sys = ClassSystem::new(10, 10.0, 1.0).unwrap();
    let eq = equilibrium(&sys);
    let traj = run_trajectory(&eq, &sys, &cfg(NoiseKind::None, 0.0, 1, 1)).unwrap();
    for (a, b) in traj.last().as_slice().iter().zip(eq.as_slice()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn euler_steps_converge_at_first_order() {
    // Γ = 0: global error at a fixed horizon halves with the step
    let sys = ClassSystem::new(10, 10.0, 1.0).unwrap();
    let x0 = StateVector::vertex(10, 3).unwrap();
    let horizon = 40.0;
    let end = |dt: f64| {
        let c = SdeConfig {
            dt,
            steps: (horizon / dt) as u64,
            sample_every: (horizon / dt) as u64,
            ..cfg(NoiseKind::None, 0.0, 1, 1)
        };
        run_trajectory(&x0, &sys, &c).unwrap().last().clone()
    };
    let reference = end(1.0 / 256.0);
    let err = |dt: f64| {
        end(dt)
            .as_slice()
            .iter()
            .zip(reference.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let (e1, e2, e3) = (err(1.0), err(0.5), err(0.25));
    for ratio in [e1 / e2, e2 / e3] {
        assert!((1.7..2.3).contains(&ratio), "{e1:e} {e2:e} {e3:e}");
    }
}

#[test]
fn runs_are_reproducible() {
    let sys = ClassSystem::default();
    let x0 = equilibrium(&sys);
    let c = cfg(NoiseKind::Multiplicative, 1e-3, 2_000, 50);
    assert_eq!(run_trajectory(&x0, &sys, &c).unwrap(), run_trajectory(&x0, &sys, &c).unwrap());
    let other = SdeConfig { seed: 6, ..c.clone() };
    assert_ne!(run_trajectory(&x0, &sys, &c).unwrap(), run_trajectory(&x0, &sys, &other).unwrap());
}

#[test]
fn ensemble_is_independent_of_worker_count() {
    let sys = ClassSystem::default();
    let x0 = equilibrium(&sys);
    let c = cfg(NoiseKind::ConservingAdditive, 1e-3, 2_000, 100);
    let one = run_ensemble_with_workers(&x0, &sys, &c, 6, 1).unwrap();
    let many = run_ensemble_with_workers(&x0, &sys, &c, 6, 8).unwrap();
    let global = run_ensemble(&x0, &sys, &c, 6).unwrap();
    assert_eq!(one, many);
    assert_eq!(one, global);
    assert_ne!(one[0], one[1]);
    // realization 0 is the single-trajectory stream
    assert_eq!(one[0], run_trajectory(&x0, &sys, &c).unwrap());
}

#[test]
fn equilibrium_depends_only_on_total_income() {
    let sys = ClassSystem::new(10, 10.0, 1.0).unwrap();
    let reference = equilibrium(&sys);
    // pairs symmetric about class 3 keep the mean income at 30
    for (a, b) in [(0.5, 0.0), (0.2, 0.3), (0.1, 0.1)] {
        let mut v = vec![0.0; 10];
        v[0] = a;
        v[4] = a;
        v[1] = b;
        v[3] = b;
        v[2] = 1.0 - 2.0 * (a + b);
        let x0 = StateVector::new(v).unwrap();
        assert!((total_income(&x0, sys.incomes()) - 30.0).abs() < 1e-12);
        let eq = find_equilibrium(&x0, &sys, 1.0, 1e-13, 2_000_000)
            .unwrap()
            .into_converged()
            .unwrap();
        for (a, b) in eq.as_slice().iter().zip(reference.as_slice()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

#[test]
fn wrong_dimension_is_rejected() {
    let sys = ClassSystem::default();
    let x0 = StateVector::uniform(4).unwrap();
    assert!(run_trajectory(&x0, &sys, &SdeConfig::default()).is_err());
    assert!(find_equilibrium(&x0, &sys, 1.0, 1e-12, 10).is_err());
}
