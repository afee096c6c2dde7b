//! Euler–Maruyama integration of the Langevin kinetic equation
//!
//! ```text
//! x' = x + D1(x) dt + D2(x) ξ sqrt(Γ dt),   ξ ~ N(0, I_n)
//! ```
//!
//! under the Itô convention.
//!
//! Randomness: realization `k` of a run with master seed `s` draws from
//! `ChaCha8Rng::seed_from_u64(s)` switched to stream `k`. Standard normal
//! deviates come from `rand_distr::StandardNormal` (ziggurat), `n` draws per
//! attempted step in class order. A single trajectory uses stream 0.
//!
//! A candidate state with a negative component is rejected and the whole
//! noise vector redrawn. Both noise terms are linear maps that preserve the
//! conservation laws, so rejection keeps them intact where clipping or
//! renormalizing would not. After `max_retries` redraws the step falls back to
//! the drift-only update and the event is counted.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetic::ClassSystem;
use crate::noise::{self, DiffusionMatrix, NoiseKind};
use crate::state::StateVector;

pub const DEFAULT_MAX_RETRIES: u32 = 100;

/// Integrator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeConfig {
    pub dt: f64,
    /// Noise amplitude `√Γ`.
    pub sqrt_gamma: f64,
    pub steps: u64,
    pub noise: NoiseKind,
    pub seed: u64,
    pub sample_every: u64,
    pub max_retries: u32,
}

impl Default for SdeConfig {
    fn default() -> Self {
        SdeConfig {
            dt: 1.0,
            sqrt_gamma: 1e-4,
            steps: 20_000,
            noise: NoiseKind::Additive,
            seed: 0,
            sample_every: 100,
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }
}

impl SdeConfig {
    pub fn gamma(&self) -> f64 {
        self.sqrt_gamma * self.sqrt_gamma
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidSetting {
                key: "dt",
                reason: format!("must be positive, got {}", self.dt),
            });
        }
        if !(self.sqrt_gamma.is_finite() && self.sqrt_gamma >= 0.0) {
            return Err(Error::InvalidSetting {
                key: "sqrt_gamma",
                reason: format!("must be nonnegative, got {}", self.sqrt_gamma),
            });
        }
        if self.steps == 0 {
            return Err(Error::InvalidSetting {
                key: "steps",
                reason: "must be at least 1".into(),
            });
        }
        if self.sample_every == 0 {
            return Err(Error::InvalidSetting {
                key: "sample_every",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    fn noise_active(&self) -> bool {
        self.noise != NoiseKind::None && self.sqrt_gamma > 0.0
    }
}

/// Random stream of realization `index` under `master_seed`.
pub fn realization_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Result of a single guarded step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: StateVector,
    /// Noise vectors redrawn because the candidate left the simplex.
    pub redraws: u32,
    /// The drift-only update was used after exhausting redraws.
    pub fell_back: bool,
}

/// Output of [`negativity_guard`].
#[derive(Debug, Clone, PartialEq)]
pub struct GuardOutcome {
    pub state: Vec<f64>,
    pub redraws: u32,
    pub fell_back: bool,
}

/// Accepts `candidate` if it is componentwise nonnegative, otherwise redraws
/// through `propose` up to `max_retries` times and finally returns
/// `drift_update` (the noise-free step from the previous state).
pub fn negativity_guard<R, F>(
    candidate: Vec<f64>,
    drift_update: &[f64],
    rng: &mut R,
    max_retries: u32,
    mut propose: F,
) -> GuardOutcome
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> Vec<f64>,
{
    let admissible = |x: &[f64]| x.iter().all(|v| *v >= 0.0);
    let mut current = candidate;
    let mut redraws = 0;
    while !admissible(&current) {
        if redraws == max_retries {
            return GuardOutcome {
                state: drift_update.to_vec(),
                redraws,
                fell_back: true,
            };
        }
        redraws += 1;
        current = propose(rng);
    }
    GuardOutcome {
        state: current,
        redraws,
        fell_back: false,
    }
}

/// Reusable stepper holding the (state-independent) diffusion matrix and
/// scratch buffers.
pub struct Integrator<'a> {
    sys: &'a ClassSystem,
    cfg: &'a SdeConfig,
    diffusion: Option<DiffusionMatrix>,
    scale: f64,
    drift: Vec<f64>,
    base: Vec<f64>,
    xi: Vec<f64>,
    kick: Vec<f64>,
}

impl<'a> Integrator<'a> {
    pub fn new(sys: &'a ClassSystem, cfg: &'a SdeConfig) -> Result<Self> {
        cfg.validate()?;
        let n = sys.n();
        let diffusion = if cfg.noise_active() {
            match cfg.noise {
                NoiseKind::Additive => Some(noise::additive_matrix(n)?),
                NoiseKind::ConservingAdditive => {
                    Some(noise::conserving_additive_matrix(sys.incomes())?)
                }
                NoiseKind::Multiplicative => {
                    Some(noise::multiplicative_matrix(&StateVector::uniform(n)?))
                }
                NoiseKind::None => None,
            }
        } else {
            None
        };
        Ok(Integrator {
            sys,
            cfg,
            diffusion,
            scale: cfg.sqrt_gamma * cfg.dt.sqrt(),
            drift: vec![0.0; n],
            base: vec![0.0; n],
            xi: vec![0.0; n],
            kick: vec![0.0; n],
        })
    }

    /// One Euler–Maruyama step from `x`, guarded against leaving the simplex.
    pub fn step<R: Rng + ?Sized>(&mut self, x: &StateVector, rng: &mut R) -> Result<StepOutcome> {
        let n = self.sys.n();
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: x.len(),
            });
        }
        let xs = x.as_slice();
        self.sys.drift_into(xs, &mut self.drift);
        for i in 0..n {
            self.base[i] = xs[i] + self.drift[i] * self.cfg.dt;
        }
        let Some(diffusion) = self.diffusion.as_mut() else {
            // a drift-only step can still overshoot for very large dt
            if self.base.iter().any(|v| *v < 0.0) {
                return Err(Error::InvalidSetting {
                    key: "dt",
                    reason: "deterministic step left the simplex; reduce dt".into(),
                });
            }
            return Ok(StepOutcome {
                state: StateVector::from_trusted(self.base.clone()),
                redraws: 0,
                fell_back: false,
            });
        };
        if diffusion.depends_on_state() {
            *diffusion = noise::multiplicative_matrix(x);
        }
        let diffusion = &*diffusion;
        let scale = self.scale;
        let base = &self.base;
        let xi = &mut self.xi;
        let kick = &mut self.kick;
        let mut propose = |rng: &mut R| {
            for v in xi.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            diffusion.apply_into(xi, kick);
            base.iter().zip(kick.iter()).map(|(b, k)| b + k * scale).collect::<Vec<f64>>()
        };
        let first = propose(rng);
        let guarded = negativity_guard(first, base, rng, self.cfg.max_retries, propose);
        if guarded.fell_back && guarded.state.iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidSetting {
                key: "dt",
                reason: "deterministic fallback step left the simplex; reduce dt".into(),
            });
        }
        Ok(StepOutcome {
            state: StateVector::from_trusted(guarded.state),
            redraws: guarded.redraws,
            fell_back: guarded.fell_back,
        })
    }
}

/// Single guarded Euler–Maruyama step. Builds the diffusion matrix on every
/// call; use [`Integrator`] for repeated stepping.
pub fn em_step<R: Rng + ?Sized>(
    x: &StateVector,
    sys: &ClassSystem,
    cfg: &SdeConfig,
    rng: &mut R,
) -> Result<StepOutcome> {
    Integrator::new(sys, cfg)?.step(x, rng)
}

/// Sampled record of one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Step indices of the recorded states, starting at 0.
    pub times: Vec<u64>,
    pub states: Vec<StateVector>,
    /// Noise redraws caused by the negativity guard.
    pub rejected_steps: u64,
    /// Steps that fell back to the drift-only update.
    pub fallback_steps: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &StateVector {
        self.states.last().expect("trajectory holds the initial state")
    }
}

fn check_initial(x0: &StateVector, sys: &ClassSystem) -> Result<()> {
    if x0.len() != sys.n() {
        return Err(Error::DimensionMismatch {
            expected: sys.n(),
            actual: x0.len(),
        });
    }
    Ok(())
}

/// Integrates with an explicit random source.
pub fn run_trajectory_with<R: Rng + ?Sized>(
    x0: &StateVector,
    sys: &ClassSystem,
    cfg: &SdeConfig,
    rng: &mut R,
) -> Result<Trajectory> {
    check_initial(x0, sys)?;
    let mut integrator = Integrator::new(sys, cfg)?;
    let capacity = (cfg.steps / cfg.sample_every + 1) as usize;
    let mut traj = Trajectory {
        times: Vec::with_capacity(capacity),
        states: Vec::with_capacity(capacity),
        rejected_steps: 0,
        fallback_steps: 0,
    };
    traj.times.push(0);
    traj.states.push(x0.clone());
    let mut x = x0.clone();
    for step in 1..=cfg.steps {
        let out = integrator.step(&x, rng)?;
        traj.rejected_steps += u64::from(out.redraws);
        traj.fallback_steps += u64::from(out.fell_back);
        x = out.state;
        if step % cfg.sample_every == 0 {
            traj.times.push(step);
            traj.states.push(x.clone());
        }
    }
    Ok(traj)
}

/// Integrates `cfg.steps` steps from `x0`, recording every
/// `cfg.sample_every`-th state plus the initial one. Uses stream 0 of
/// `cfg.seed`.
pub fn run_trajectory(x0: &StateVector, sys: &ClassSystem, cfg: &SdeConfig) -> Result<Trajectory> {
    let mut rng = realization_rng(cfg.seed, 0);
    run_trajectory_with(x0, sys, cfg, &mut rng)
}

/// `realizations` independent trajectories on the global thread pool.
/// Realization `k` uses stream `k` of `cfg.seed`, so output does not depend on
/// scheduling.
pub fn run_ensemble(
    x0: &StateVector,
    sys: &ClassSystem,
    cfg: &SdeConfig,
    realizations: usize,
) -> Result<Vec<Trajectory>> {
    if realizations == 0 {
        return Err(Error::InvalidSetting {
            key: "realizations",
            reason: "must be at least 1".into(),
        });
    }
    check_initial(x0, sys)?;
    cfg.validate()?;
    (0..realizations as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = realization_rng(cfg.seed, k);
            run_trajectory_with(x0, sys, cfg, &mut rng)
        })
        .collect()
}

/// [`run_ensemble`] on a dedicated pool of `workers` threads.
pub fn run_ensemble_with_workers(
    x0: &StateVector,
    sys: &ClassSystem,
    cfg: &SdeConfig,
    realizations: usize,
    workers: usize,
) -> Result<Vec<Trajectory>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidSetting {
            key: "workers",
            reason: e.to_string(),
        })?;
    pool.install(|| run_ensemble(x0, sys, cfg, realizations))
}

pub const DEFAULT_EQUILIBRIUM_TOL: f64 = 1e-12;
pub const DEFAULT_EQUILIBRIUM_MAX_STEPS: u64 = 1_000_000;

/// Terminal state of the deterministic relaxation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub state: StateVector,
    pub converged: bool,
    /// `max_i |D1_i|` at the terminal state.
    pub residual: f64,
    pub steps: u64,
}

impl Equilibrium {
    pub fn into_converged(self) -> Result<StateVector> {
        if self.converged {
            Ok(self.state)
        } else {
            Err(Error::NotConverged {
                steps: self.steps,
                residual: self.residual,
            })
        }
    }
}

/// Integrates the noise-free system with forward Euler steps of size `dt`
/// until the drift residual `max_i |D1_i(x)|` drops below `tol`.
pub fn find_equilibrium(
    x0: &StateVector,
    sys: &ClassSystem,
    dt: f64,
    tol: f64,
    max_steps: u64,
) -> Result<Equilibrium> {
    check_initial(x0, sys)?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidSetting {
            key: "dt",
            reason: format!("must be positive, got {dt}"),
        });
    }
    let n = sys.n();
    let mut x = x0.as_slice().to_vec();
    let mut d = vec![0.0; n];
    let residual = |d: &[f64]| d.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    sys.drift_into(&x, &mut d);
    let mut res = residual(&d);
    let mut steps = 0;
    while res >= tol && steps < max_steps {
        for (xi, di) in x.iter_mut().zip(&d) {
            *xi += di * dt;
        }
        if x.iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidSetting {
                key: "dt",
                reason: "relaxation step left the simplex; reduce dt".into(),
            });
        }
        steps += 1;
        sys.drift_into(&x, &mut d);
        res = residual(&d);
    }
    Ok(Equilibrium {
        state: StateVector::from_trusted(x),
        converged: res < tol,
        residual: res,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(noise: NoiseKind, sqrt_gamma: f64) -> SdeConfig {
        SdeConfig {
            noise,
            sqrt_gamma,
            seed: 7,
            ..SdeConfig::default()
        }
    }

    #[test]
    fn guard_passes_admissible_candidate() {
        let mut rng = realization_rng(1, 0);
        let out = negativity_guard(vec![0.5, 0.5], &[0.5, 0.5], &mut rng, 100, |_| {
            unreachable!("no redraw expected")
        });
        assert_eq!(out.state, vec![0.5, 0.5]);
        assert_eq!(out.redraws, 0);
        assert!(!out.fell_back);
    }

    #[test]
    fn guard_redraws_then_falls_back() {
        let mut rng = realization_rng(1, 0);
        let mut calls = 0;
        let out = negativity_guard(vec![-0.1, 1.1], &[0.3, 0.7], &mut rng, 3, |_| {
            calls += 1;
            vec![-0.2, 1.2]
        });
        assert_eq!(calls, 3);
        assert_eq!(out.redraws, 3);
        assert!(out.fell_back);
        assert_eq!(out.state, vec![0.3, 0.7]);
    }

    #[test]
    fn tiny_class_forces_redraw() {
        // Near-empty richest class with noise far above its population.
        let sys = ClassSystem::new(10, 10.0, 1.0).unwrap();
        let mut x = vec![0.1; 10];
        x[9] = 1e-7;
        x[0] += 0.1 - 1e-7;
        let x = StateVector::new(x).unwrap();
        let c = cfg(NoiseKind::Additive, 2e-2);
        let mut integ = Integrator::new(&sys, &c).unwrap();
        let mut rng = realization_rng(3, 0);
        let mut total_redraws = 0;
        for _ in 0..50 {
            let out = integ.step(&x, &mut rng).unwrap();
            total_redraws += out.redraws;
            assert!(out.state.as_slice().iter().all(|v| *v >= 0.0));
            assert!((out.state.sum() - 1.0).abs() < 1e-14);
        }
        assert!(total_redraws > 0);
    }

    #[test]
    fn step_is_reproducible() {
        let sys = ClassSystem::new(10, 10.0, 1.0).unwrap();
        let x = StateVector::uniform(10).unwrap();
        let c = cfg(NoiseKind::Additive, 1e-3);
        let a = em_step(&x, &sys, &c, &mut realization_rng(9, 2)).unwrap();
        let b = em_step(&x, &sys, &c, &mut realization_rng(9, 2)).unwrap();
        assert_eq!(a, b);
        let c2 = em_step(&x, &sys, &c, &mut realization_rng(9, 3)).unwrap();
        assert_ne!(a.state, c2.state);
    }

    #[test]
    fn sample_count() {
        let sys = ClassSystem::new(10, 10.0, 1.0).unwrap();
        let x = StateVector::uniform(10).unwrap();
        let traj = run_trajectory(&x, &sys, &cfg(NoiseKind::Additive, 1e-4)).unwrap();
        assert_eq!(traj.len(), 201);
        assert_eq!(traj.times[200], 20_000);
        let c = SdeConfig {
            steps: 250,
            sample_every: 100,
            ..cfg(NoiseKind::None, 0.0)
        };
        assert_eq!(run_trajectory(&x, &sys, &c).unwrap().times, vec![0, 100, 200]);
    }

    #[test]
    fn config_validation() {
        let mut c = SdeConfig::default();
        c.dt = 0.0;
        assert!(matches!(c.validate(), Err(Error::InvalidSetting { key: "dt", .. })));
        let mut c = SdeConfig::default();
        c.steps = 0;
        assert!(c.validate().is_err());
        let mut c = SdeConfig::default();
        c.sample_every = 0;
        assert!(c.validate().is_err());
        let mut c = SdeConfig::default();
        c.sqrt_gamma = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn equilibrium_start_returns_immediately() {
        let sys = ClassSystem::new(10, 10.0, 1.0).unwrap();
        let x0 = StateVector::vertex(10, 3).unwrap();
        let eq = find_equilibrium(&x0, &sys, 1.0, 1e-12, 1_000_000).unwrap();
        assert!(eq.converged);
        let again = find_equilibrium(&eq.state, &sys, 1.0, 1e-12, 1_000_000).unwrap();
        assert_eq!(again.steps, 0);
        assert_eq!(again.state, eq.state);
    }

    #[test]
    fn non_convergence_is_reported() {
        let sys = ClassSystem::new(10, 10.0, 1.0).unwrap();
        let x0 = StateVector::vertex(10, 3).unwrap();
        let eq = find_equilibrium(&x0, &sys, 1.0, 1e-12, 10).unwrap();
        assert!(!eq.converged);
        assert_eq!(eq.steps, 10);
        match eq.into_converged() {
            Err(Error::NotConverged { steps: 10, residual }) => assert!(residual > 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_realizations_rejected() {
        let sys = ClassSystem::new(10, 10.0, 1.0).unwrap();
        let x = StateVector::uniform(10).unwrap();
        assert!(run_ensemble(&x, &sys, &SdeConfig::default(), 0).is_err());
    }
}
