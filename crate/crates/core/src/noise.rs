//! Diffusion matrices shaping the Langevin noise.
//!
//! Every matrix here annihilates the all-ones direction, so a noise draw never
//! changes the total population. The income-conserving matrix additionally
//! annihilates the income vector `r`:
//!
//! ```text
//! D = I + a,   a_ij = [R1 (r_i + r_j) - R2 - n r_i r_j] / (n R2 - R1²)
//! ```
//!
//! with `R1 = Σ r_j` and `R2 = Σ r_j²`. `a` is the minimum-Frobenius-norm
//! offset satisfying both column constraints; `D` is the orthogonal projector
//! onto the complement of `span{1, r}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::StateVector;

/// Noise selection for an integration run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    None,
    Additive,
    Multiplicative,
    ConservingAdditive,
}

impl NoiseKind {
    pub fn diffusion_kind(self) -> Option<DiffusionKind> {
        match self {
            NoiseKind::None => None,
            NoiseKind::Additive => Some(DiffusionKind::Additive),
            NoiseKind::Multiplicative => Some(DiffusionKind::Multiplicative),
            NoiseKind::ConservingAdditive => Some(DiffusionKind::ConservingAdditive),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            NoiseKind::None => "none",
            NoiseKind::Additive => "additive",
            NoiseKind::Multiplicative => "multiplicative",
            NoiseKind::ConservingAdditive => "conserving-additive",
        }
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            NoiseKind::None,
            NoiseKind::Additive,
            NoiseKind::Multiplicative,
            NoiseKind::ConservingAdditive,
        ]
        .into_iter()
        .find(|k| k.label() == s)
        .ok_or_else(|| Error::InvalidSetting {
            key: "noise",
            reason: format!(
                "unknown noise kind {s:?}; expected none, additive, multiplicative or conserving-additive"
            ),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffusionKind {
    Additive,
    Multiplicative,
    ConservingAdditive,
}

/// Square noise-shaping matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionMatrix {
    kind: DiffusionKind,
    n: usize,
    m: Vec<f64>,
}

impl DiffusionMatrix {
    pub fn kind(&self) -> DiffusionKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// True when the matrix has to be rebuilt from the current state.
    pub fn depends_on_state(&self) -> bool {
        self.kind == DiffusionKind::Multiplicative
    }

    /// Entry `(i, j)`, 0-based.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.m
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.m.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    /// `out = m · xi`.
    pub fn apply_into(&self, xi: &[f64], out: &mut [f64]) {
        for (row, o) in self.m.chunks(self.n).zip(out.iter_mut()) {
            *o = row.iter().zip(xi).map(|(a, b)| a * b).sum();
        }
    }

    pub fn apply(&self, xi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.apply_into(xi, &mut out);
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Largest `|Σ_i w_i m_ij|` over columns `j`.
    pub fn column_residual(&self, weights: &[f64]) -> f64 {
        (0..self.n)
            .map(|j| {
                (0..self.n)
                    .map(|i| weights[i] * self.get(i, j))
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max)
    }

    /// Largest `|m_ij - m_ji|`.
    pub fn symmetry_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Largest entry of `|m·m - m|`.
    pub fn idempotency_residual(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let sq: f64 = (0..n).map(|k| self.get(i, k) * self.get(k, j)).sum();
                worst = worst.max((sq - self.get(i, j)).abs());
            }
        }
        worst
    }
}

/// Population-conserving additive matrix `m_ij = δ_ij - 1/n`.
pub fn additive_matrix(n: usize) -> Result<DiffusionMatrix> {
    if n < 2 {
        return Err(Error::TooFewClasses(n));
    }
    let inv = 1.0 / n as f64;
    let mut m = vec![-inv; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0 - inv;
    }
    Ok(DiffusionMatrix {
        kind: DiffusionKind::Additive,
        n,
        m,
    })
}

/// Multiplicative matrix `m_ij = x_i δ_ij - x_i x_j`, so that
/// `(m ξ)_i = x_i ξ_i - x_i Σ_k x_k ξ_k`.
pub fn multiplicative_matrix(x: &StateVector) -> DiffusionMatrix {
    let mut out = DiffusionMatrix {
        kind: DiffusionKind::Multiplicative,
        n: x.len(),
        m: vec![0.0; x.len() * x.len()],
    };
    fill_multiplicative(x.as_slice(), &mut out.m);
    out
}

pub(crate) fn fill_multiplicative(x: &[f64], m: &mut [f64]) {
    let n = x.len();
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = if i == j {
                x[i] * (1.0 - x[i])
            } else {
                -x[i] * x[j]
            };
        }
    }
}

/// The offset matrix `a` whose identity shift `I + a` kills both the
/// population and the income direction.
pub fn conserving_offsets(incomes: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = incomes.len();
    if n < 2 {
        return Err(Error::TooFewClasses(n));
    }
    let nf = n as f64;
    let r1: f64 = incomes.iter().sum();
    let r2: f64 = incomes.iter().map(|r| r * r).sum();
    let denom = nf * r2 - r1 * r1;
    // relative scale so that nearly-constant ladders are rejected as well
    if !(denom > 1e-12 * nf * r2) {
        return Err(Error::DegenerateIncomes(denom));
    }
    Ok(incomes
        .iter()
        .map(|&ri| {
            incomes
                .iter()
                .map(|&rj| (r1 * (ri + rj) - r2 - nf * ri * rj) / denom)
                .collect()
        })
        .collect())
}

/// Additive matrix conserving both population and total income, `D = I + a`.
pub fn conserving_additive_matrix(incomes: &[f64]) -> Result<DiffusionMatrix> {
    let a = conserving_offsets(incomes)?;
    let n = incomes.len();
    let mut m = vec![0.0; n * n];
    for (i, row) in a.iter().enumerate() {
        for (j, aij) in row.iter().enumerate() {
            m[i * n + j] = if i == j { 1.0 + aij } else { *aij };
        }
    }
    Ok(DiffusionMatrix {
        kind: DiffusionKind::ConservingAdditive,
        n,
        m,
    })
}

/// Minimum-Frobenius-norm offset `a` such that `Σ_j a_ji v_j = -v_i` for
/// every constraint vector `v`, i.e. `a = -V (VᵀV)⁻¹ Vᵀ`.
///
/// With the single constraint `v = 1` this gives `a_ji = -1/n`; with
/// `{1, r}` it reproduces [`conserving_offsets`] through a different
/// algebraic route (Gram-matrix solve instead of the closed form).
pub fn min_norm_offsets(constraints: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
    let m = constraints.len();
    let n = constraints.first().map_or(0, |v| v.len());
    if n < 2 {
        return Err(Error::TooFewClasses(n));
    }
    if let Some(v) = constraints.iter().find(|v| v.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: v.len(),
        });
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut gram: Vec<Vec<f64>> = constraints
        .iter()
        .map(|u| constraints.iter().map(|v| dot(u, v)).collect())
        .collect();
    let mut inv: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    // Gauss-Jordan with partial pivoting on the (small) Gram matrix.
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&a, &b| gram[a][col].abs().total_cmp(&gram[b][col].abs()))
            .unwrap_or(col);
        if gram[pivot][col].abs() < 1e-12 {
            return Err(Error::DegenerateIncomes(gram[pivot][col]));
        }
        gram.swap(col, pivot);
        inv.swap(col, pivot);
        let p = gram[col][col];
        for j in 0..m {
            gram[col][j] /= p;
            inv[col][j] /= p;
        }
        for row in 0..m {
            if row != col {
                let f = gram[row][col];
                if f != 0.0 {
                    for j in 0..m {
                        gram[row][j] -= f * gram[col][j];
                        inv[row][j] -= f * inv[col][j];
                    }
                }
            }
        }
    }
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, aij) in row.iter_mut().enumerate() {
            let mut s = 0.0;
            for (p, vp) in constraints.iter().enumerate() {
                for (q, vq) in constraints.iter().enumerate() {
                    s += vp[i] * inv[p][q] * vq[j];
                }
            }
            *aij = -s;
        }
    }
    Ok(a)
}
