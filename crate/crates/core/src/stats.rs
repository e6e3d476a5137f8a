//! Reference laws, the Gaussian CDF and Kolmogorov-Smirnov distances.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SERIES_LIMIT: f64 = 2.5;

/// `erf(x) = 2/sqrt(pi) exp(-x^2) sum_n 2^n x^(2n+1) / (1*3*...*(2n+1))`,
/// a series of positive terms with no cancellation.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    while term.abs() > 1e-17 * sum.abs() {
        n += 1.0;
        term *= 2.0 * x2 / (2.0 * n + 1.0);
        sum += term;
    }
    2.0 / PI.sqrt() * (-x2).exp() * sum
}

/// Continued fraction for erfc at x > 2.5, evaluated with modified Lentz.
fn erfc_fraction(x: f64) -> f64 {
    // erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..200 {
        let a = k as f64 / 2.0;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / PI.sqrt() / f
}

pub fn erf(x: f64) -> f64 {
    if x.abs() <= SERIES_LIMIT {
        erf_series(x)
    } else {
        x.signum() * (1.0 - erfc_fraction(x.abs()))
    }
}

pub fn erfc(x: f64) -> f64 {
    if x > SERIES_LIMIT {
        erfc_fraction(x)
    } else if x < -SERIES_LIMIT {
        2.0 - erfc_fraction(-x)
    } else {
        1.0 - erf_series(x)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LawKind {
    Binomial { n: usize },
    ShiftedBinomialWindow { n: usize, shift: usize },
}

/// Closed-form reference distribution on `0..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLaw {
    pub kind: LawKind,
    pub pmf: Vec<f64>,
}

impl ReferenceLaw {
    /// `P(X <= t)` for integer or real `t`.
    pub fn cdf(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let top = (t.floor() as usize).min(self.pmf.len() - 1);
        self.pmf[..=top].iter().sum::<f64>().min(1.0)
    }

    pub fn mean(&self) -> f64 {
        moments(&self.pmf).0
    }

    pub fn variance(&self) -> f64 {
        moments(&self.pmf).1
    }
}

/// `Bin(n, 1/2)` from exact integer Pascal rows, scaled by `2^-n`.
pub fn binomial_law(n: usize) -> ReferenceLaw {
    let pmf = if n <= 125 {
        let mut row: Vec<u128> = vec![1];
        for _ in 0..n {
            let mut next = vec![1u128; row.len() + 1];
            for s in 1..row.len() {
                next[s] = row[s - 1] + row[s];
            }
            row = next;
        }
        let scale = 2f64.powi(-(n as i32));
        row.into_iter().map(|c| c as f64 * scale).collect()
    } else {
        let mut row = vec![1.0f64];
        for _ in 0..n {
            let mut next = vec![0.0; row.len() + 1];
            for (s, &p) in row.iter().enumerate() {
                next[s] += p / 2.0;
                next[s + 1] += p / 2.0;
            }
            row = next;
        }
        row
    };
    ReferenceLaw { kind: LawKind::Binomial { n }, pmf }
}

/// Mean and variance of a pmf on `0..len`.
pub fn moments(pmf: &[f64]) -> (f64, f64) {
    let total: f64 = pmf.iter().sum();
    let mean = pmf.iter().enumerate().map(|(s, p)| s as f64 * p).sum::<f64>() / total;
    let var = pmf.iter().enumerate().map(|(s, p)| (s as f64 - mean).powi(2) * p).sum::<f64>() / total;
    (mean, var)
}

/// Supremum distance between the step CDF of `pmf` and the normal CDF with
/// matching mean and variance, taken over the one-sided limits at each atom.
pub fn ks_to_gaussian(pmf: &[f64]) -> Result<f64> {
    let (mean, var) = moments(pmf);
    if !(var > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let sd = var.sqrt();
    let mut below = 0.0;
    let mut sup: f64 = 0.0;
    for (s, &p) in pmf.iter().enumerate() {
        let phi = normal_cdf((s as f64 - mean) / sd);
        sup = sup.max((below - phi).abs());
        below += p;
        sup = sup.max((below - phi).abs());
    }
    Ok(sup)
}

/// Total variation distance `0.5 * sum |p - q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Stower surplus at an on-manifold point: loop coordinates strictly inside `(pi, 2pi)`.
pub fn stower_surplus(kappa: &[f64], loop_indices: &[usize]) -> usize {
    loop_indices
        .iter()
        .filter(|&&e| {
            let k = kappa[e].rem_euclid(2.0 * PI);
            k > PI && k < 2.0 * PI
        })
        .count()
}

/// Outcome of a binomial CDF sandwich test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub pass: bool,
    pub shift: usize,
    pub slack: f64,
    /// Largest violation over all `t`; negative when every bound holds with room.
    pub worst_excess: f64,
}

/// Checks `P(X <= t - w) - slack <= F(t) <= P(X <= t + w) + slack` for all
/// integer `t` in `-1..=beta`, where `X ~ Bin(n, 1/2)` and `F` is the CDF of `pmf`.
pub fn window_check(pmf: &[f64], n: usize, shift: usize, slack: f64) -> WindowReport {
    let law = binomial_law(n);
    let beta = pmf.len() - 1;
    let mut worst = f64::NEG_INFINITY;
    let mut below = 0.0;
    for t in -1..=(beta as i64) {
        if t >= 0 {
            below += pmf[t as usize];
        }
        let lower = law.cdf((t - shift as i64) as f64);
        let upper = law.cdf((t + shift as i64) as f64);
        worst = worst.max(lower - below).max(below - upper);
    }
    WindowReport { pass: worst <= slack, shift, slack, worst_excess: worst }
}

/// Mandarin sandwich: `X ~ Bin(beta, 1/2)`, window 3.
pub fn mandarin_window_check(pmf: &[f64], m: usize, slack: f64) -> Result<WindowReport> {
    let beta = pmf.len() - 1;
    if m < 2 || beta != m - 1 {
        return Err(Error::BettiMismatch { left: beta, right: m.saturating_sub(1) });
    }
    Ok(window_check(pmf, beta, 3, slack))
}

/// Stower sandwich: `X ~ Bin(beta - 1, 1/2)`, window 1.
pub fn stower_window_check(pmf: &[f64], loops: usize, slack: f64) -> Result<WindowReport> {
    let beta = pmf.len() - 1;
    if beta != loops || loops < 1 {
        return Err(Error::BettiMismatch { left: beta, right: loops });
    }
    Ok(window_check(pmf, beta - 1, 1, slack))
}
