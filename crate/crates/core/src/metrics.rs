//! Scalar observables of a class distribution and ensemble statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetic::ClassSystem;
use crate::sde::Trajectory;
use crate::state::StateVector;

/// Default guard on `1 - x_1 - x_n` in [`mobility`].
pub const MOBILITY_EPSILON: f64 = 1e-9;

/// Total income `μ = Σ r_i x_i`.
pub fn total_income(x: &StateVector, incomes: &[f64]) -> f64 {
    x.as_slice().iter().zip(incomes).map(|(a, r)| a * r).sum()
}

/// Discrete Gini index over the class distribution,
/// `G = Σ_{i<j} x_i x_j (r_j - r_i) / μ` for increasing incomes.
///
/// Computed in `O(n)` from prefix sums:
/// `Σ_{i<j} x_i x_j (r_j - r_i) = Σ_j x_j (r_j P_j - Q_j)` with
/// `P_j = Σ_{i<j} x_i` and `Q_j = Σ_{i<j} x_i r_i`.
pub fn gini(x: &StateVector, incomes: &[f64]) -> f64 {
    let mu = total_income(x, incomes);
    let (mut mass, mut weighted, mut acc) = (0.0, 0.0, 0.0);
    for (&xj, &rj) in x.as_slice().iter().zip(incomes) {
        acc += xj * (rj * mass - weighted);
        mass += xj;
        weighted += xj * rj;
    }
    acc / mu
}

/// Social mobility
/// `M = (S/Δr) / (1 - x_1 - x_n) · Σ_k Σ_{i=2}^{n-1} p_ki x_k x_i`.
pub fn mobility(x: &StateVector, sys: &ClassSystem) -> Result<f64> {
    mobility_with_epsilon(x, sys, MOBILITY_EPSILON)
}

pub fn mobility_with_epsilon(x: &StateVector, sys: &ClassSystem, eps: f64) -> Result<f64> {
    let n = sys.n();
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: x.len(),
        });
    }
    let xs = x.as_slice();
    let edge = xs[0] + xs[n - 1];
    if edge >= 1.0 - eps {
        return Err(Error::DegenerateDistribution(edge));
    }
    let mut sum = 0.0;
    for k in 1..=n {
        let xk = xs[k - 1];
        for i in 2..n {
            sum += sys.p(k, i) * xk * xs[i - 1];
        }
    }
    Ok(sys.ratio() * sum / (1.0 - edge))
}

/// A labelled scalar time series aligned with trajectory samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub name: String,
    pub values: Vec<f64>,
}

impl ObservableSeries {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        ObservableSeries {
            name: name.into(),
            values,
        }
    }
}

/// The `mu`, `gini` and `mobility` series of a trajectory. Mobility is NaN
/// at samples where it is undefined.
pub fn observables(traj: &Trajectory, sys: &ClassSystem) -> [ObservableSeries; 3] {
    let r = sys.incomes();
    let mu = traj.states.iter().map(|x| total_income(x, r)).collect();
    let g = traj.states.iter().map(|x| gini(x, r)).collect();
    let m = traj
        .states
        .iter()
        .map(|x| mobility(x, sys).unwrap_or(f64::NAN))
        .collect();
    [
        ObservableSeries::new("mu", mu),
        ObservableSeries::new("gini", g),
        ObservableSeries::new("mobility", m),
    ]
}

/// Relative spread below which a series is treated as constant.
pub const CONSTANT_SPREAD: f64 = 1e-12;

/// Sample Pearson correlation coefficient.
pub fn pearson(a: &ObservableSeries, b: &ObservableSeries) -> Result<f64> {
    pearson_slices(&a.values, &b.values)
}

pub fn pearson_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DegenerateSeries(format!(
            "length mismatch {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 3 {
        return Err(Error::DegenerateSeries(format!(
            "need at least 3 samples, got {}",
            a.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateSeries("non-finite sample".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    // spread at round-off level, e.g. a conserved total, counts as constant
    let flat = |ss: f64, m: f64| (ss / n).sqrt() <= CONSTANT_SPREAD * m.abs() || ss == 0.0;
    if flat(saa, ma) || flat(sbb, mb) {
        return Err(Error::DegenerateSeries("constant series".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Fixed-width histogram with bins `[j·w, (j+1)·w)` anchored at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    /// Index `j` of the first stored bin.
    pub first_bin: i64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// `(left, right, count)` for every stored bin.
    pub fn bins(&self) -> impl Iterator<Item = (f64, f64, u64)> + '_ {
        self.counts.iter().enumerate().map(move |(o, &c)| {
            let j = self.first_bin + o as i64;
            (j as f64 * self.bin_width, (j + 1) as f64 * self.bin_width, c)
        })
    }

    /// Bin with the largest count (first on ties).
    pub fn mode(&self) -> Option<(f64, f64, u64)> {
        self.bins()
            .fold(None, |best: Option<(f64, f64, u64)>, b| match best {
                Some(cur) if cur.2 >= b.2 => Some(cur),
                _ => Some(b),
            })
    }
}

/// Bin index of `v` such that `j·w <= v < (j+1)·w` with the edges computed
/// as `j as f64 * w`.
fn bin_index(v: f64, w: f64) -> i64 {
    let mut j = (v / w).floor() as i64;
    if (j as f64) * w > v {
        j -= 1;
    } else if ((j + 1) as f64) * w <= v {
        j += 1;
    }
    j
}

pub fn histogram(samples: &[f64], bin_width: f64) -> Result<Histogram> {
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(Error::InvalidSetting {
            key: "bin_width",
            reason: format!("must be positive, got {bin_width}"),
        });
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateSeries("non-finite histogram sample".into()));
    }
    let idx: Vec<i64> = samples.iter().map(|&v| bin_index(v, bin_width)).collect();
    let (Some(&lo), Some(&hi)) = (idx.iter().min(), idx.iter().max()) else {
        return Ok(Histogram {
            bin_width,
            first_bin: 0,
            counts: Vec::new(),
        });
    };
    let mut counts = vec![0u64; (hi - lo + 1) as usize];
    for j in idx {
        counts[(j - lo) as usize] += 1;
    }
    Ok(Histogram {
        bin_width,
        first_bin: lo,
        counts,
    })
}

/// Pooled statistics over all sampled states of all realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub realizations: usize,
    pub samples: usize,
    /// Per-class mean fractions.
    pub means: Vec<f64>,
    /// Per-class population standard deviations.
    pub std_devs: Vec<f64>,
    /// `(class, histogram)` pairs, classes 1-based.
    pub histograms: Vec<(usize, Histogram)>,
    /// Labelled correlation estimates.
    pub correlations: Vec<(String, f64)>,
}

/// Pools every recorded state, computes per-class means and population
/// standard deviations, and histograms the requested classes.
pub fn summarize_ensemble(
    trajectories: &[Trajectory],
    histogram_classes: &[usize],
    bin_width: f64,
) -> Result<EnsembleSummary> {
    let first = trajectories
        .first()
        .and_then(|t| t.states.first())
        .ok_or_else(|| Error::DegenerateSeries("no trajectories to summarize".into()))?;
    let n = first.len();
    for &c in histogram_classes {
        if c == 0 || c > n {
            return Err(Error::IndexOutOfRange {
                index: c,
                lo: 1,
                hi: n,
            });
        }
    }
    let pooled: Vec<&StateVector> = trajectories.iter().flat_map(|t| &t.states).collect();
    let count = pooled.len() as f64;
    let mut means = vec![0.0; n];
    for x in &pooled {
        for (m, v) in means.iter_mut().zip(x.as_slice()) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![0.0; n];
    for x in &pooled {
        for ((s, v), m) in var.iter_mut().zip(x.as_slice()).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    let std_devs = var.iter().map(|s| (s / count).sqrt()).collect();
    let histograms = histogram_classes
        .iter()
        .map(|&c| {
            let samples: Vec<f64> = pooled.iter().map(|x| x.fraction(c)).collect();
            histogram(&samples, bin_width).map(|h| (c, h))
        })
        .collect::<Result<_>>()?;
    Ok(EnsembleSummary {
        realizations: trajectories.len(),
        samples: pooled.len(),
        means,
        std_devs,
        histograms,
        correlations: Vec::new(),
    })
}

/// Per-realization correlations averaged over the ensemble:
/// `corr(mu, gini)` and `corr(gini, mobility)`. Realizations with a
/// degenerate series are skipped.
pub fn mean_correlations(trajectories: &[Trajectory], sys: &ClassSystem) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    let mut mg = Vec::new();
    let mut gm = Vec::new();
    for t in trajectories {
        let [mu, g, m] = observables(t, sys);
        if let Ok(c) = pearson(&mu, &g) {
            mg.push(c);
        }
        if let Ok(c) = pearson(&g, &m) {
            gm.push(c);
        }
    }
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    if !mg.is_empty() {
        out.push(("mu_gini".to_string(), avg(&mg)));
    }
    if !gm.is_empty() {
        out.push(("gini_mobility".to_string(), avg(&gm)));
    }
    out
}

/// Sample skewness `m3 / m2^{3/2}` of a slice.
pub fn skewness(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let m2 = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = samples.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn income_spot_values() {
        let sys = ClassSystem::new(10, 10.0, 1.0).unwrap();
        let r = sys.incomes();
        assert_abs_diff_eq!(total_income(&StateVector::vertex(10, 3).unwrap(), r), 30.0);
        assert_abs_diff_eq!(
            total_income(&StateVector::uniform(10).unwrap(), r),
            55.0,
            epsilon = 1e-12
        );
        assert_eq!(total_income(&StateVector::vertex(10, 1).unwrap(), r), r[0]);
    }

    #[test]
    fn gini_spot_values() {
        for k in 1..=10 {
            let x = StateVector::vertex(10, k).unwrap();
            assert_eq!(gini(&x, ClassSystem::new(10, 10.0, 1.0).unwrap().incomes()), 0.0);
        }
        let x = StateVector::new(vec![0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(gini(&x, &[10.0, 30.0]), 0.25, epsilon = 1e-15);
        let u = StateVector::uniform(10).unwrap();
        assert_abs_diff_eq!(gini(&u, ClassSystem::new(10, 10.0, 1.0).unwrap().incomes()), 0.3, epsilon = 1e-14);
    }

    #[test]
    fn mobility_edge_cases() {
        let sys = ClassSystem::new(10, 10.0, 1.0).unwrap();
        let mut x = vec![0.0; 10];
        x[0] = 0.4;
        x[9] = 0.6;
        let x = StateVector::new(x).unwrap();
        assert!(matches!(mobility(&x, &sys), Err(Error::DegenerateDistribution(_))));
        // interior vertex: only same-class encounters contribute
        let v = StateVector::vertex(10, 5).unwrap();
        assert_abs_diff_eq!(mobility(&v, &sys).unwrap(), 0.1 * sys.p(5, 5), epsilon = 1e-15);
    }

    #[test]
    fn mobility_is_linear_in_ratio() {
        let x = StateVector::uniform(10).unwrap();
        let a = mobility(&x, &ClassSystem::new(10, 10.0, 1.0).unwrap()).unwrap();
        let b = mobility(&x, &ClassSystem::new(10, 10.0, 4.0).unwrap()).unwrap();
        assert_abs_diff_eq!(b, 4.0 * a, epsilon = 1e-15);
    }

    #[test]
    fn pearson_basic() {
        let a = ObservableSeries::new("a", vec![1.0, 2.0, 4.0, 3.0]);
        assert_abs_diff_eq!(pearson(&a, &a).unwrap(), 1.0, epsilon = 1e-15);
        let b = ObservableSeries::new("b", a.values.iter().map(|v| 7.0 - v).collect());
        assert_abs_diff_eq!(pearson(&a, &b).unwrap(), -1.0, epsilon = 1e-15);
        let c = ObservableSeries::new("c", vec![2.0; 4]);
        assert!(pearson(&a, &c).is_err());
        assert!(pearson_slices(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(pearson_slices(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
        // a conserved total with round-off jitter
        let mu = [30.0, 30.000000000000004, 29.999999999999996, 30.0];
        assert!(pearson_slices(&mu, &[0.1, 0.2, 0.3, 0.5]).is_err());
    }

    #[test]
    fn histogram_boundaries() {
        let h = histogram(&[0.0, 0.004, 0.005], 0.005).unwrap();
        assert_eq!(h.first_bin, 0);
        assert_eq!(h.counts, vec![2, 1]);
        let bins: Vec<_> = h.bins().collect();
        assert_eq!(bins[1], (0.005, 0.01, 1));
        assert!(histogram(&[], 0.005).unwrap().is_empty());
        assert!(histogram(&[0.1], 0.0).is_err());
    }

    #[test]
    fn histogram_edges_are_consistent() {
        let w = 0.005;
        for j in 0..400 {
            let edge = j as f64 * w;
            let h = histogram(&[edge], w).unwrap();
            assert_eq!(h.first_bin, j);
        }
    }

    #[test]
    fn constant_trajectory_summary() {
        let x = StateVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        let t = Trajectory {
            times: vec![0, 1, 2],
            states: vec![x.clone(); 3],
            rejected_steps: 0,
            fallback_steps: 0,
        };
        let s = summarize_ensemble(&[t], &[1, 3], 0.005).unwrap();
        assert_eq!(s.samples, 3);
        for (m, v) in s.means.iter().zip(x.as_slice()) {
            assert_abs_diff_eq!(m, v, epsilon = 1e-15);
        }
        assert!(s.std_devs.iter().all(|v| *v < 1e-15));
        assert_eq!(s.histograms[0].1.total(), 3);
        assert!(summarize_ensemble(&[], &[], 0.005).is_err());
    }
}
