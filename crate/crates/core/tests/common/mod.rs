//! Independent re-evaluation of the model formulas for the test targets.
//! Shares nothing with the crate: the Kronecker-delta expressions are
//! evaluated term by term over the extended index range and the quadratic
//! forms are summed with plain loops.
#![allow(dead_code)]

fn kd(a: i64, b: i64) -> f64 {
    (a == b) as i64 as f64
}

/// Term-by-term transition probability over the extended range `0..=n+1`.
pub fn oracle_p(h: i64, k: i64, n: i64) -> f64 {
    if h <= 0 || k <= 0 || h > n || k > n {
        return 0.0;
    }
    let nf = n as f64;
    let t1 = h.min(k) as f64 / (4.0 * nf)
        * (1.0 - kd(h, k))
        * (1.0 - kd(1, k))
        * (1.0 - kd(1, h))
        * (1.0 - kd(n, h))
        * (1.0 - kd(n, k));
    let t2 = h as f64 / (2.0 * nf) * kd(h, k) * (1.0 - kd(1, k)) * (1.0 - kd(n, k));
    let t3 = kd(1, k) * (1.0 - kd(1, h)) * (1.0 - kd(n, h)) / (2.0 * nf);
    let t4 = k as f64 / (2.0 * nf) * kd(n, h) * (1.0 - kd(n, k)) * (1.0 - kd(1, k));
    let t5 = kd(h, n) * kd(k, 1) / (2.0 * nf);
    t1 + t2 + t3 + t4 + t5
}

/// The full coefficient written out as one expression, including the
/// `δ_hi · Δr/S` identity part.
pub fn oracle_c(i: i64, h: i64, k: i64, n: i64, ratio: f64) -> f64 {
    let p = |a, b| oracle_p(a, b, n);
    ratio
        * (kd(h, i + 1) * (1.0 - kd(k, n)) * p(i + 1, k)
            + kd(h, i)
                * (1.0 / ratio
                    - (1.0 - kd(i, n)) * (1.0 - kd(k, 1)) * p(k, i)
                    - (1.0 - kd(i, 1)) * (1.0 - kd(k, n)) * p(i, k)))
        + ratio * kd(h, i - 1) * (1.0 - kd(k, 1)) * p(k, i - 1)
}

pub fn oracle_drift(x: &[f64], ratio: f64) -> Vec<f64> {
    let n = x.len() as i64;
    (1..=n)
        .map(|i| {
            let mut v = 0.0;
            for h in 1..=n {
                for k in 1..=n {
                    v += oracle_c(i, h, k, n, ratio) * x[(h - 1) as usize] * x[(k - 1) as usize];
                    v -= oracle_c(h, i, k, n, ratio) * x[(i - 1) as usize] * x[(k - 1) as usize];
                }
            }
            v
        })
        .collect()
}

pub const CONVERGED_EQUILIBRIUM: [f64; 10] = [
    0.37271758040877456,
    0.19761637292268522,
    0.12071846510261967,
    0.08367366664625346,
    0.0623306950549639,
    0.048690203667088504,
    0.039361097440610754,
    0.0326701797921199,
    0.027701595494597386,
    0.01452014347030349,
];
