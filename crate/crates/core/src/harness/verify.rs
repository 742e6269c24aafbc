//! The `verify` suite: sequence, estimator and certifier checks in one report.

use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::mmse::{
    certify_lemma, error_variance, mmse_filter, verify_frequency_whitening,
    verify_frequency_whitening_exhaustive, verify_majorization_lemma, CMatrix, HermitianCovariance,
    MajorizationReport,
};
use crate::rng::{complex_normal, label, stream};
use crate::sequences::{dft, generate_root, periodic_autocorrelation, ZcConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub seed: Option<u64>,
    pub trials: usize,
    /// Worst observed value of the checked quantity.
    pub metric: f64,
    pub tolerance: f64,
    pub violations: usize,
    pub passed: bool,
    pub detail: String,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub software: String,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn violations(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Largest `|R(c)|` over all coprime roots `u` and shifts `1..N`, taken over
/// both the time-domain sequence and its DFT.
pub fn cazac_check(length: usize) -> Result<CheckResult> {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    let mut roots = 0;
    for u in 1..length {
        if gcd(u, length) != 1 {
            continue;
        }
        roots += 1;
        let z = generate_root(&ZcConfig::unrestricted(u, length)?)?;
        let f = dft(z.samples());
        for c in 1..length {
            worst = worst
                .max(periodic_autocorrelation(z.samples(), c).norm())
                .max(periodic_autocorrelation(&f, c).norm() / length as f64);
        }
    }
    let tol = 1e-9 * length as f64;
    Ok(CheckResult {
        name: "cazac".into(),
        seed: None,
        trials: roots * (length - 1),
        metric: worst,
        tolerance: tol,
        violations: usize::from(worst > tol),
        passed: worst <= tol,
        detail: format!("N_z={length}, {roots} roots, time and DFT domain (DFT normalised by N_z)"),
        seconds: t0.elapsed().as_secs_f64(),
    })
}

/// Random PSD matrix `G G^H / k` with `k` columns.
pub fn random_psd(n: usize, rng: &mut crate::rng::SimRng) -> HermitianCovariance {
    let k = n + rng.random_range(0..=n);
    let g = CMatrix::from_fn(n, k, |_, _| complex_normal(rng, 1.0));
    let m = &g * g.adjoint() / Complex64::new(k as f64, 0.0);
    let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    HermitianCovariance::new(m).expect("G G^H is Hermitian")
}

/// Cholesky-based filter against `R (R + s I)^-1` from an explicit inverse.
pub fn mmse_inverse_check(trials: usize, max_dim: usize, seed: u64) -> Result<CheckResult> {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..trials {
        let mut rng = stream(seed, &[label::CERTIFY, 3, i as u64]);
        let n = rng.random_range(1..=max_dim);
        let r = random_psd(n, &mut rng);
        let s2 = 10f64.powf(rng.random_range(-1.0..=1.0));
        let reg = r.matrix() + CMatrix::identity(n, n) * Complex64::new(s2, 0.0);
        let inv = reg
            .try_inverse()
            .ok_or_else(|| Error::numeric("explicit inverse failed"))?;
        let oracle = r.matrix() * inv;
        let w = mmse_filter(&r, s2)?;
        worst = worst.max((w.weights() - oracle).norm());
    }
    let tol = 1e-10;
    Ok(CheckResult {
        name: "mmse_filter".into(),
        seed: Some(seed),
        trials,
        metric: worst,
        tolerance: tol,
        violations: usize::from(worst > tol),
        passed: worst <= tol,
        detail: format!("Frobenius distance to explicit inverse, N<= {max_dim}"),
        seconds: t0.elapsed().as_secs_f64(),
    })
}

/// Monte Carlo MSE of the MMSE estimator against the analytic error sum.
/// Returns the worst relative deviation over the noise levels.
pub fn error_variance_check(dim: usize, noise: &[f64], draws: usize, seed: u64, exec: Execution) -> Result<CheckResult> {
    let t0 = Instant::now();
    let r = random_psd(dim, &mut stream(seed, &[label::CERTIFY, 4]));
    let sqrt = r.sqrt();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (k, &s2) in noise.iter().enumerate() {
        let w = mmse_filter(&r, s2)?;
        let analytic = error_variance(&r, s2)?;
        // Sharded sums keep the result independent of the worker count.
        let shards = draws.div_ceil(1000);
        let sums = exec.map(shards, |j| {
            let mut rng = stream(seed, &[label::CERTIFY, 5, k as u64, j as u64]);
            let mut z = vec![Complex64::new(0.0, 0.0); dim];
            let mut y = vec![Complex64::new(0.0, 0.0); dim];
            let mut est = vec![Complex64::new(0.0, 0.0); dim];
            let mut acc = 0.0;
            for _ in (j * 1000)..((j + 1) * 1000).min(draws) {
                z.iter_mut().for_each(|v| *v = complex_normal(&mut rng, 1.0));
                let h: Vec<Complex64> = (0..dim).map(|a| (0..dim).map(|b| sqrt[(a, b)] * z[b]).sum()).collect();
                for a in 0..dim {
                    y[a] = h[a] + complex_normal(&mut rng, s2);
                }
                w.apply(&y, &mut est);
                acc += h.iter().zip(&est).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
            }
            acc
        });
        let mc = sums.iter().sum::<f64>() / draws as f64;
        let rel = (mc - analytic).abs() / analytic;
        worst = worst.max(rel);
        parts.push(format!("s2={s2}: analytic {analytic:.6}, monte carlo {mc:.6}"));
    }
    let tol = 0.02;
    Ok(CheckResult {
        name: "error_variance".into(),
        seed: Some(seed),
        trials: draws * noise.len(),
        metric: worst,
        tolerance: tol,
        violations: usize::from(worst > tol),
        passed: worst <= tol,
        detail: parts.join("; "),
        seconds: t0.elapsed().as_secs_f64(),
    })
}

pub fn lemma_check(trials: usize, min_dim: usize, max_dim: usize, seed: u64, exec: Execution) -> Result<CheckResult> {
    let t0 = Instant::now();
    let rep = certify_lemma(trials, min_dim, max_dim, seed, exec)?;
    Ok(CheckResult {
        name: rep.name,
        seed: Some(seed),
        trials,
        metric: rep.worst_margin,
        tolerance: crate::mmse::LEMMA_MARGIN_TOL,
        violations: rep.violations,
        passed: rep.violations == 0,
        detail: format!("dims {min_dim}..={max_dim}; metric is the smallest e_A - e_B; chain checked on every pair"),
        seconds: t0.elapsed().as_secs_f64(),
    })
}

pub fn whitening_check(cfg: &ZcConfig, draws: usize, seed: u64) -> Result<CheckResult> {
    let t0 = Instant::now();
    let rep = verify_frequency_whitening(cfg, draws, seed)?;
    let tol = 0.05;
    Ok(CheckResult {
        name: "whitening".into(),
        seed: Some(seed),
        trials: draws,
        metric: rep.max_offdiag_ratio,
        tolerance: tol,
        violations: usize::from(rep.max_offdiag_ratio > tol),
        passed: rep.max_offdiag_ratio <= tol,
        detail: format!("N_z={}, u={}", cfg.length, cfg.root),
        seconds: t0.elapsed().as_secs_f64(),
    })
}

pub fn whitening_exhaustive_check(cfg: &ZcConfig) -> Result<CheckResult> {
    let t0 = Instant::now();
    let rep = verify_frequency_whitening_exhaustive(cfg)?;
    let tol = 1e-9;
    Ok(CheckResult {
        name: "whitening_exhaustive".into(),
        seed: None,
        trials: rep.draws,
        metric: rep.max_offdiag_ratio,
        tolerance: tol,
        violations: usize::from(rep.max_offdiag_ratio > tol),
        passed: rep.max_offdiag_ratio <= tol,
        detail: format!("N_z={}, every (l, d)", cfg.length),
        seconds: t0.elapsed().as_secs_f64(),
    })
}

/// Runs every check with seeds derived from `seed`.
pub fn verify_command(seed: u64, exec: Execution) -> Result<VerifyReport> {
    let sub = |k: u64| crate::rng::derive_seed(seed, &[label::CERTIFY, k]);
    let checks = vec![
        cazac_check(139)?,
        mmse_inverse_check(100, 32, sub(1))?,
        error_variance_check(8, &[0.1, 1.0, 10.0], 100_000, sub(2), exec)?,
        lemma_check(1000, 2, 16, sub(3), exec)?,
        whitening_check(&ZcConfig::default(), 10_000, sub(4))?,
        whitening_exhaustive_check(&ZcConfig::new(2, 5, 1, 5)?)?,
    ];
    Ok(VerifyReport {
        software: super::software_version(),
        seed,
        checks,
    })
}

/// A user-supplied `(A, B, sigma^2)` triple. Matrices are row lists of
/// `[re, im]` pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LemmaPairFile {
    pub a: Vec<Vec<[f64; 2]>>,
    pub b: Vec<Vec<[f64; 2]>>,
    pub noise_variance: f64,
}

fn to_matrix(rows: &[Vec<[f64; 2]>], name: &str) -> Result<CMatrix> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::input(format!("{name} must be a non-empty square matrix")));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1])))
}

/// Checks one pair from a file. Malformed or non-Hermitian input is an
/// input error rather than a lemma violation.
pub fn verify_pair_file(path: &Path) -> Result<MajorizationReport> {
    let text = std::fs::read_to_string(path)?;
    let pair: LemmaPairFile =
        serde_json::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
    let a = to_matrix(&pair.a, "A")?;
    let b = to_matrix(&pair.b, "B")?;
    verify_majorization_lemma(&a, &b, pair.noise_variance)
}
