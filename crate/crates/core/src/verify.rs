//! Randomized invariant audit behind `kinex verify`.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kinetic::ClassSystem;
use crate::noise;
use crate::sde::realization_rng;
use crate::state::StateVector;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    /// Worst residual observed.
    pub worst: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(name: impl Into<String>, worst: f64, threshold: f64) -> Self {
        CheckResult {
            name: name.into(),
            worst,
            threshold,
            passed: worst <= threshold,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(
                s,
                "[{}] {:<44} worst = {:.3e} (threshold {:.1e})",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.worst,
                c.threshold
            );
        }
        s
    }
}

/// Uniform sample from the probability simplex (flat Dirichlet).
pub fn random_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> StateVector {
    let e: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = e.iter().sum();
    StateVector::from_trusted(e.into_iter().map(|v| v / total).collect())
}

/// Drift by direct summation of the quadratic form over every `(h, k)` pair
/// and every target class, using the dense coefficient accessor.
pub fn dense_drift(sys: &ClassSystem, x: &[f64]) -> Vec<f64> {
    let n = sys.n();
    let c = |i, h, k| sys.interaction_coefficient(i, h, k).expect("indices in range");
    (1..=n)
        .map(|i| {
            let mut gain = 0.0;
            let mut loss = 0.0;
            for h in 1..=n {
                for k in 1..=n {
                    gain += c(i, h, k) * x[h - 1] * x[k - 1];
                    loss += c(h, i, k) * x[i - 1] * x[k - 1];
                }
            }
            gain - loss
        })
        .collect()
}

/// Central finite-difference estimate of the drift divergence.
pub fn fd_divergence(sys: &ClassSystem, x: &[f64], step: f64) -> f64 {
    let n = sys.n();
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    let mut y = x.to_vec();
    let mut total = 0.0;
    for i in 0..n {
        y[i] = x[i] + step;
        sys.drift_into(&y, &mut plus);
        y[i] = x[i] - step;
        sys.drift_into(&y, &mut minus);
        y[i] = x[i];
        total += (plus[i] - minus[i]) / (2.0 * step);
    }
    total
}

/// Coefficient and drift invariants of one model instance.
pub fn audit_system(sys: &ClassSystem, samples: usize, seed: u64) -> Vec<CheckResult> {
    let n = sys.n();
    let tag = format!("n={n}, S/dr={}", sys.ratio());
    let mut rng = realization_rng(seed, n as u64);
    let r = sys.incomes();
    let (mut pop, mut inc, mut dense, mut div) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    let mut d = vec![0.0; n];
    for _ in 0..samples {
        let x = random_simplex(n, &mut rng);
        sys.drift_into(x.as_slice(), &mut d);
        pop = pop.max(d.iter().sum::<f64>().abs());
        inc = inc.max(d.iter().zip(r).map(|(a, b)| a * b).sum::<f64>().abs());
        let brute = dense_drift(sys, x.as_slice());
        dense = dense.max(
            brute
                .iter()
                .zip(&d)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        );
        let analytic = sys.drift_divergence_at(x.as_slice());
        let fd = fd_divergence(sys, x.as_slice(), 1e-6);
        // the divergence scales with S/Δr and vanishes identically for n = 2
        div = div.max((analytic - fd).abs() / analytic.abs().max(sys.ratio()));
    }
    vec![
        CheckResult::new(
            format!("coefficient stochasticity ({tag})"),
            sys.stochasticity_residual(),
            1e-14,
        ),
        CheckResult::new(
            format!("coefficient nonnegativity ({tag})"),
            (-sys.min_coefficient()).max(0.0),
            0.0,
        ),
        CheckResult::new(format!("drift population conservation ({tag})"), pop, 1e-13),
        CheckResult::new(format!("drift income conservation ({tag})"), inc, 1e-10),
        CheckResult::new(format!("sparse vs dense drift ({tag})"), dense, 1e-13),
        CheckResult::new(format!("divergence vs finite differences ({tag})"), div, 1e-6),
    ]
}

/// Conservation algebra of the three diffusion matrices.
pub fn audit_noise(samples: usize, seed: u64) -> Vec<CheckResult> {
    let mut rng = realization_rng(seed, 1 << 32);
    let (mut add_cols, mut add_proj, mut add_rank) = (0.0_f64, 0.0_f64, 0.0_f64);
    let (mut cons_pop, mut cons_inc, mut cons_sym, mut cons_proj, mut cons_rank) =
        (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    let mut mult_cols = 0.0_f64;
    let mut single = 0.0_f64;
    for s in 0..samples {
        let n = 2 + s % 19;
        let a = noise::additive_matrix(n).expect("n >= 2");
        add_cols = add_cols.max(a.column_residual(&vec![1.0; n]));
        add_proj = add_proj.max(a.symmetry_residual().max(a.idempotency_residual()));
        add_rank = add_rank.max((a.trace() - (n - 1) as f64).abs());

        let mut incomes: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..100.0)).collect();
        incomes.sort_by(f64::total_cmp);
        let offsets = noise::conserving_offsets(&incomes).expect("distinct incomes");
        for i in 0..n {
            let col: f64 = (0..n).map(|j| offsets[j][i]).sum();
            let wcol: f64 = (0..n).map(|j| offsets[j][i] * incomes[j]).sum();
            cons_pop = cons_pop.max((1.0 + col).abs());
            cons_inc = cons_inc.max((incomes[i] + wcol).abs());
        }
        let c = noise::conserving_additive_matrix(&incomes).expect("distinct incomes");
        cons_sym = cons_sym.max(c.symmetry_residual());
        cons_proj = cons_proj.max(c.idempotency_residual());
        cons_rank = cons_rank.max((c.trace() - (n - 2) as f64).abs());

        let x = random_simplex(n, &mut rng);
        let m = noise::multiplicative_matrix(&x);
        mult_cols = mult_cols.max(m.column_residual(&vec![1.0; n]));

        let ones = vec![1.0; n];
        let one_constraint = noise::min_norm_offsets(&[&ones]).expect("n >= 2");
        let want = -1.0 / n as f64;
        for row in &one_constraint {
            for v in row {
                single = single.max((v - want).abs());
            }
        }
    }
    vec![
        CheckResult::new("additive column sums", add_cols, 1e-14),
        CheckResult::new("additive projector identities", add_proj, 1e-12),
        CheckResult::new("additive trace = n - 1", add_rank, 1e-12),
        CheckResult::new("conserving offsets: 1 + sum_j a_ji = 0", cons_pop, 1e-13),
        CheckResult::new("conserving offsets: r_i + sum_j a_ji r_j = 0", cons_inc, 1e-10),
        CheckResult::new("conserving symmetry", cons_sym, 1e-12),
        CheckResult::new("conserving idempotency", cons_proj, 1e-10),
        CheckResult::new("conserving trace = n - 2", cons_rank, 1e-10),
        CheckResult::new("multiplicative column sums", mult_cols, 1e-14),
        CheckResult::new("single-constraint offsets = -1/n", single, 0.0),
    ]
}

/// Full audit over `n = 2..=12` and several money units, plus the noise
/// algebra on random income ladders.
pub fn run_audit(seed: u64) -> AuditReport {
    let mut checks = Vec::new();
    for n in 2..=12 {
        for s_unit in [0.5, 1.0, 10.0] {
            let sys = ClassSystem::new(n, 10.0, s_unit).expect("valid parameters");
            checks.extend(audit_system(&sys, 100, seed));
        }
    }
    checks.extend(audit_noise(100, seed));
    AuditReport { seed, checks }
}

/// Runs the audit and turns any failure into [`Error::Verification`].
pub fn cmd_verify(seed: u64) -> Result<AuditReport> {
    let report = run_audit(seed);
    if report.passed() {
        Ok(report)
    } else {
        let names: Vec<_> = report.failures().map(|c| c.name.clone()).collect();
        Err(Error::Verification(names.join("; ")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrupted_coefficients_fail_by_name() {
        let mut sys = ClassSystem::new(10, 10.0, 1.0).unwrap();
        sys.perturb_coefficient(4, 5, 3, 1e-3).unwrap();
        let checks = audit_system(&sys, 20, 1);
        let failed: Vec<_> = checks.iter().filter(|c| !c.passed).collect();
        assert!(failed.iter().any(|c| c.name.starts_with("coefficient stochasticity")));
        assert!(failed.iter().any(|c| c.name.starts_with("drift income conservation")));
        // the gain/loss structure conserves population for any tensor
        assert!(!failed.iter().any(|c| c.name.starts_with("drift population")));
    }

    #[test]
    fn clean_system_passes() {
        let sys = ClassSystem::new(10, 10.0, 1.0).unwrap();
        assert!(audit_system(&sys, 50, 3).iter().all(|c| c.passed));
        assert!(audit_noise(40, 3).iter().all(|c| c.passed), "{:?}", audit_noise(40, 3));
    }
}
