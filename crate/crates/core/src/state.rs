use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|Σ x_i - 1|` accepted by [`StateVector::new`].
pub const SIMPLEX_TOLERANCE: f64 = 1e-12;

/// Population fractions `x_1..x_n` of the income classes.
///
/// Class indices on the public surface are 1-based; `as_slice()` exposes the
/// underlying 0-based storage for numerical kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    /// Validates nonnegativity and normalization.
    pub fn new(x: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(x, SIMPLEX_TOLERANCE)
    }

    /// Like [`StateVector::new`] with a caller-chosen normalization tolerance.
    pub fn with_tolerance(x: Vec<f64>, tol: f64) -> Result<Self> {
        if x.len() < 2 {
            return Err(Error::TooFewClasses(x.len()));
        }
        if let Some((i, v)) = x
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::NotOnSimplex(format!("x_{} = {v}", i + 1)));
        }
        let total: f64 = x.iter().sum();
        if (total - 1.0).abs() > tol {
            return Err(Error::NotOnSimplex(format!("sum of fractions = {total}")));
        }
        Ok(StateVector(x))
    }

    /// Integrator output; nonnegativity is guaranteed by the caller.
    pub(crate) fn from_trusted(x: Vec<f64>) -> Self {
        debug_assert!(x.iter().all(|v| *v >= 0.0));
        StateVector(x)
    }

    /// All population concentrated in `class` (1-based).
    pub fn vertex(n: usize, class: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewClasses(n));
        }
        if class == 0 || class > n {
            return Err(Error::IndexOutOfRange {
                index: class,
                lo: 1,
                hi: n,
            });
        }
        let mut x = vec![0.0; n];
        x[class - 1] = 1.0;
        Ok(StateVector(x))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewClasses(n));
        }
        Ok(StateVector(vec![1.0 / n as f64; n]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Fraction of class `class` (1-based).
    pub fn fraction(&self, class: usize) -> f64 {
        self.0[class - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Fractions rendered as percentages.
    pub fn percentages(&self) -> Vec<f64> {
        self.0.iter().map(|v| 100.0 * v).collect()
    }
}

impl AsRef<[f64]> for StateVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}
