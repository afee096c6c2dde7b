//! Binary-exchange kinetic model on a linear income ladder.
//!
//! Individuals are grouped into `n` classes with incomes `r_j = j·Δr`. In an
//! encounter between an `h`-individual and a `k`-individual, the first pays
//! one money unit `S` to the second with probability `p_hk`. The interaction
//! coefficient `C^i_hk` is the probability that the `h`-individual ends up in
//! class `i`, and the population fractions evolve as
//!
//! ```text
//! dx_i/dt = Σ_hk C^i_hk x_h x_k - Σ_hk C^h_ik x_i x_k
//! ```
//!
//! Every coefficient splits as `C^i_hk = δ_hi + T^i_hk` where the transfer
//! part `T` is proportional to `S/Δr` and vanishes unless `|i - h| <= 1`.
//! [`ClassSystem`] stores only the three transfer entries per `(h, k)`, so
//! the drift and its divergence cost `O(n²)`.

use crate::error::{Error, Result};
use crate::state::StateVector;

#[inline]
fn delta(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// Probability that in an `(h, k)` encounter the `h`-individual pays the
/// `k`-individual.
///
/// Indices are 1-based and may range over the extended set `0..=n+1`; the
/// extension rows and columns (`h = 0`, `h = n+1`, `k = 0`, `k = n+1`) are 0.
pub fn transition_probability(h: usize, k: usize, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::TooFewClasses(n));
    }
    for idx in [h, k] {
        if idx > n + 1 {
            return Err(Error::IndexOutOfRange {
                index: idx,
                lo: 0,
                hi: n + 1,
            });
        }
    }
    if h == 0 || h == n + 1 || k == 0 || k == n + 1 {
        return Ok(0.0);
    }
    let nf = n as f64;
    let not = |a, b| 1.0 - delta(a, b);
    let mixed = h.min(k) as f64 / (4.0 * nf)
        * not(h, k)
        * not(1, k)
        * not(1, h)
        * not(n, h)
        * not(n, k);
    let same = h as f64 / (2.0 * nf) * delta(h, k) * not(1, k) * not(n, k);
    let to_poorest = delta(1, k) * not(1, h) * not(n, h) / (2.0 * nf);
    let from_richest = k as f64 / (2.0 * nf) * delta(n, h) * not(n, k) * not(1, k);
    let richest_to_poorest = delta(h, n) * delta(k, 1) / (2.0 * nf);
    Ok(mixed + same + to_poorest + from_richest + richest_to_poorest)
}

/// Model constants with precomputed transition probabilities and transfer
/// coefficients. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ClassSystem {
    n: usize,
    delta_r: f64,
    s_unit: f64,
    incomes: Vec<f64>,
    /// `p[(h-1)*n + (k-1)] = p_hk`.
    p: Vec<f64>,
    /// For each `(h, k)`: `[T^{h-1}_hk, T^h_hk, T^{h+1}_hk]`.
    transfer: Vec<[f64; 3]>,
    /// `Σ_h T^h_ik` at `(i-1)*n + (k-1)`; zero for a well-formed system.
    transfer_out: Vec<f64>,
}

impl Default for ClassSystem {
    /// Ten classes, `Δr = 10`, `S = 0.1`.
    fn default() -> Self {
        ClassSystem::new(10, 10.0, 0.1).expect("default parameters are valid")
    }
}

impl ClassSystem {
    pub fn new(n: usize, delta_r: f64, s_unit: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewClasses(n));
        }
        if !(delta_r.is_finite() && delta_r > 0.0) {
            return Err(Error::InvalidSpacing(delta_r));
        }
        if !(s_unit.is_finite() && s_unit > 0.0 && s_unit <= delta_r) {
            return Err(Error::InvalidMoneyUnit { s_unit, delta_r });
        }

        // Extended table over 0..=n+1 so the coefficient formula can index
        // p_{i+1,k} and p_{k,i-1} without branching.
        let ext = n + 2;
        let mut p_ext = vec![0.0; ext * ext];
        for h in 0..ext {
            for k in 0..ext {
                p_ext[h * ext + k] = transition_probability(h, k, n)?;
            }
        }
        let pe = |h: usize, k: usize| p_ext[h * ext + k];

        let mut p = vec![0.0; n * n];
        for h in 1..=n {
            for k in 1..=n {
                p[(h - 1) * n + (k - 1)] = pe(h, k);
            }
        }

        let ratio = s_unit / delta_r;
        let mut transfer = vec![[0.0; 3]; n * n];
        for h in 1..=n {
            for k in 1..=n {
                let entry = &mut transfer[(h - 1) * n + (k - 1)];
                // h pays k and drops to i = h - 1
                if h > 1 {
                    let i = h - 1;
                    entry[0] = ratio * (1.0 - delta(k, n)) * pe(i + 1, k);
                }
                // h stays: lose the probability of either paying or receiving
                let i = h;
                let receive = (1.0 - delta(i, n)) * (1.0 - delta(k, 1)) * pe(k, i);
                let pay = (1.0 - delta(i, 1)) * (1.0 - delta(k, n)) * pe(i, k);
                entry[1] = -ratio * (receive + pay);
                // k pays h and h rises to i = h + 1
                if h < n {
                    let i = h + 1;
                    entry[2] = ratio * (1.0 - delta(k, 1)) * pe(k, i - 1);
                }
            }
        }

        let mut sys = ClassSystem {
            n,
            delta_r,
            s_unit,
            incomes: (1..=n).map(|j| j as f64 * delta_r).collect(),
            p,
            transfer,
            transfer_out: vec![0.0; n * n],
        };
        sys.refresh_out_sums();
        sys.assert_boundary_rules();
        Ok(sys)
    }

    fn refresh_out_sums(&mut self) {
        let n = self.n;
        for i in 0..n {
            for k in 0..n {
                self.transfer_out[i * n + k] = self.transfer[i * n + k].iter().sum();
            }
        }
    }

    fn assert_boundary_rules(&self) {
        let n = self.n;
        for h in 1..=n {
            for k in 1..=n {
                let phk = self.p(h, k);
                assert!(phk >= 0.0, "p_{h}{k} negative");
                assert!(phk + self.p(k, h) <= 1.0, "p_{h}{k} + p_{k}{h} > 1");
            }
            assert_eq!(self.p(1, h), 0.0, "poorest class must not pay");
            assert_eq!(self.p(h, n), 0.0, "richest class must not receive");
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta_r(&self) -> f64 {
        self.delta_r
    }

    pub fn s_unit(&self) -> f64 {
        self.s_unit
    }

    /// `S / Δr`.
    pub fn ratio(&self) -> f64 {
        self.s_unit / self.delta_r
    }

    /// Class incomes `r_j = j·Δr`.
    pub fn incomes(&self) -> &[f64] {
        &self.incomes
    }

    /// `p_hk`, 1-based.
    pub fn p(&self, h: usize, k: usize) -> f64 {
        self.p[(h - 1) * self.n + (k - 1)]
    }

    fn check_class(&self, idx: usize) -> Result<()> {
        if idx == 0 || idx > self.n {
            Err(Error::IndexOutOfRange {
                index: idx,
                lo: 1,
                hi: self.n,
            })
        } else {
            Ok(())
        }
    }

    /// `C^i_hk`: probability that an `h`-individual meeting a `k`-individual
    /// ends up in class `i`. All indices 1-based.
    pub fn interaction_coefficient(&self, i: usize, h: usize, k: usize) -> Result<f64> {
        self.check_class(i)?;
        self.check_class(h)?;
        self.check_class(k)?;
        let base = delta(h, i);
        if i + 1 < h || h + 1 < i {
            return Ok(base);
        }
        let slot = i + 1 - h;
        Ok(base + self.transfer[(h - 1) * self.n + (k - 1)][slot])
    }

    /// Largest `|Σ_i C^i_hk - 1|` over all `(h, k)`.
    pub fn stochasticity_residual(&self) -> f64 {
        self.transfer
            .iter()
            .map(|t| ((1.0 + t[1]) + t[0] + t[2] - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Smallest coefficient `C^i_hk` over all index triples.
    pub fn min_coefficient(&self) -> f64 {
        let n = self.n;
        let mut lo = f64::INFINITY;
        for h in 0..n {
            for k in 0..n {
                let t = self.transfer[h * n + k];
                lo = lo.min(1.0 + t[1]);
                if h > 0 {
                    lo = lo.min(t[0]);
                }
                if h + 1 < n {
                    lo = lo.min(t[2]);
                }
            }
        }
        // every (i, h) pair with |i - h| > 1 contributes an exact zero
        if n > 2 {
            lo = lo.min(0.0);
        }
        lo
    }

    /// Shifts a single stored coefficient. Used to exercise the invariant
    /// audit with a corrupted tensor.
    #[doc(hidden)]
    pub fn perturb_coefficient(&mut self, i: usize, h: usize, k: usize, by: f64) -> Result<()> {
        self.check_class(i)?;
        self.check_class(h)?;
        self.check_class(k)?;
        if i + 1 < h || h + 1 < i {
            return Err(Error::IndexOutOfRange {
                index: i,
                lo: h.saturating_sub(1).max(1),
                hi: (h + 1).min(self.n),
            });
        }
        self.transfer[(h - 1) * self.n + (k - 1)][i + 1 - h] += by;
        self.refresh_out_sums();
        Ok(())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            Err(Error::DimensionMismatch {
                expected: self.n,
                actual: len,
            })
        } else {
            Ok(())
        }
    }

    /// Deterministic rate `D^(1)(x)` for the state `x`.
    pub fn drift(&self, x: &StateVector) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        let mut out = vec![0.0; self.n];
        self.drift_into(x.as_slice(), &mut out);
        Ok(out)
    }

    /// Drift at an arbitrary point of `R^n` (the quadratic form does not
    /// require normalization). `x` and `out` must have length `n`.
    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(out.len(), n);
        out.fill(0.0);
        // The identity part of C contributes x_i Σx_k to gain and loss alike.
        for h in 0..n {
            let xh = x[h];
            if xh == 0.0 {
                continue;
            }
            let row = &self.transfer[h * n..(h + 1) * n];
            let (mut down, mut stay, mut up) = (0.0, 0.0, 0.0);
            for (t, &xk) in row.iter().zip(x) {
                down += t[0] * xk;
                stay += t[1] * xk;
                up += t[2] * xk;
            }
            if h > 0 {
                out[h - 1] += xh * down;
            }
            out[h] += xh * stay;
            if h + 1 < n {
                out[h + 1] += xh * up;
            }
        }
        for i in 0..n {
            let outflow: f64 = self.transfer_out[i * n..(i + 1) * n]
                .iter()
                .zip(x)
                .map(|(s, xk)| s * xk)
                .sum();
            out[i] -= x[i] * outflow;
        }
    }

    /// `Σ_i ∂D^(1)_i/∂x_i`, the divergence of the drift field.
    pub fn drift_divergence(&self, x: &StateVector) -> Result<f64> {
        self.check_len(x.len())?;
        Ok(self.drift_divergence_at(x.as_slice()))
    }

    /// Divergence at an arbitrary point of `R^n`.
    pub fn drift_divergence_at(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let mut total = 0.0;
        for i in 0..n {
            // ∂/∂x_i of Σ_hk T^i_hk x_h x_k
            for (k, &xk) in x.iter().enumerate() {
                let mut coeff = self.transfer[i * n + k][1];
                if k + 1 >= i && i + 1 >= k {
                    coeff += self.transfer[k * n + i][i + 1 - k];
                }
                total += coeff * xk;
            }
            // ∂/∂x_i of x_i Σ_k x_k Σ_h T^h_ik
            let out_row = &self.transfer_out[i * n..(i + 1) * n];
            let outflow: f64 = out_row.iter().zip(x).map(|(s, xk)| s * xk).sum();
            total -= outflow + x[i] * out_row[i];
        }
        total
    }
}
