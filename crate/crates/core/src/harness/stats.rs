//! Binomial intervals, paired tests and empirical CDFs.

use serde::{Deserialize, Serialize};

/// Two-sided 95% standard normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// A rate with its 95% Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub successes: usize,
    pub trials: usize,
    pub rate: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn wilson_interval(successes: usize, trials: usize) -> RateEstimate {
    if trials == 0 {
        return RateEstimate {
            successes,
            trials,
            rate: 0.0,
            lower: 0.0,
            upper: 1.0,
        };
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    RateEstimate {
        successes,
        trials,
        rate: p,
        lower: (centre - half).max(0.0),
        upper: (centre + half).min(1.0),
    }
}

/// `P(X >= k)` for `X ~ Binomial(n, 1/2)`, summed in log space.
pub fn binomial_upper_tail_half(k: usize, n: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    let ln2 = std::f64::consts::LN_2;
    // ln C(n, j) built incrementally from j = 0.
    let mut ln_c = 0.0;
    let mut terms = Vec::with_capacity(n - k + 1);
    for j in 0..=n {
        if j > 0 {
            ln_c += ((n - j + 1) as f64).ln() - (j as f64).ln();
        }
        if j >= k {
            terms.push(ln_c - n as f64 * ln2);
        }
    }
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    (max + sum.ln()).exp().min(1.0)
}

/// Paired miss comparison of detectors `a` and `b` on the same signal trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    /// Trials missed by `a` but detected by `b`.
    pub only_a_missed: usize,
    /// Trials missed by `b` but detected by `a`.
    pub only_b_missed: usize,
    /// One-sided exact p-value for "a misses more often than b".
    pub p_a_worse: f64,
    /// One-sided exact p-value for "b misses more often than a".
    pub p_b_worse: f64,
}

pub fn mcnemar(a_missed: &[bool], b_missed: &[bool]) -> McNemar {
    let mut only_a = 0;
    let mut only_b = 0;
    for (&a, &b) in a_missed.iter().zip(b_missed) {
        match (a, b) {
            (true, false) => only_a += 1,
            (false, true) => only_b += 1,
            _ => {}
        }
    }
    let n = only_a + only_b;
    McNemar {
        only_a_missed: only_a,
        only_b_missed: only_b,
        p_a_worse: binomial_upper_tail_half(only_a, n),
        p_b_worse: binomial_upper_tail_half(only_b, n),
    }
}

/// One point of an empirical CDF of absolute TA errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub error: u64,
    pub count: usize,
}

/// Empirical CDF of `|e|`: cumulative counts at every distinct value.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TaCdf {
    pub total: usize,
    pub points: Vec<CdfPoint>,
}

impl TaCdf {
    /// `F(x) = P(|e| <= x)`; zero for an empty sample.
    pub fn at(&self, x: u64) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let idx = self.points.partition_point(|p| p.error <= x);
        if idx == 0 {
            0.0
        } else {
            self.points[idx - 1].count as f64 / self.total as f64
        }
    }
}

pub fn compute_ta_cdf(errors: &[i64]) -> TaCdf {
    let mut abs: Vec<u64> = errors.iter().map(|e| e.unsigned_abs()).collect();
    abs.sort_unstable();
    let mut points: Vec<CdfPoint> = Vec::new();
    for (i, &e) in abs.iter().enumerate() {
        match points.last_mut() {
            Some(p) if p.error == e => p.count = i + 1,
            _ => points.push(CdfPoint { error: e, count: i + 1 }),
        }
    }
    TaCdf {
        total: abs.len(),
        points,
    }
}

/// One-sided two-sample Kolmogorov-Smirnov check that `candidate` is not
/// stochastically larger (worse) than `reference`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsNoWorse {
    /// `max_x (F_reference(x) - F_candidate(x))`, floored at zero.
    pub statistic: f64,
    pub critical: f64,
    pub no_worse: bool,
}

/// Asymptotic one-sided critical value at level `alpha` is
/// `sqrt(-ln(alpha) / 2) * sqrt((n + m) / (n m))`.
pub fn ks_no_worse(candidate: &TaCdf, reference: &TaCdf, alpha: f64) -> KsNoWorse {
    let (n, m) = (candidate.total as f64, reference.total as f64);
    if candidate.total == 0 || reference.total == 0 {
        return KsNoWorse {
            statistic: 0.0,
            critical: f64::INFINITY,
            no_worse: true,
        };
    }
    let mut d: f64 = 0.0;
    for p in candidate.points.iter().chain(&reference.points) {
        d = d.max(reference.at(p.error) - candidate.at(p.error));
    }
    let critical = (-alpha.ln() / 2.0).sqrt() * ((n + m) / (n * m)).sqrt();
    KsNoWorse {
        statistic: d,
        critical,
        no_worse: d <= critical,
    }
}
