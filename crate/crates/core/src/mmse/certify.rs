//! Numerical certifiers for the structural claims the detector design rests on.
//!
//! * Frequency whitening: with the total cyclic offset uniform over the
//!   period, the covariance of the matched-filtered root across subcarriers is
//!   diagonal, so a frequency-direction MMSE stage buys nothing.
//! * Off-diagonal energy lowers MMSE error: for equal diagonals and
//!   `||A||_F <= ||B||_F` the error of `B` does not exceed that of `A`. The
//!   certifier also checks the weak-majorization chain behind it, using the
//!   ascending-order convention: `x <_w y` means every partial sum of the `k`
//!   smallest entries of `x` is at least that of `y`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    accumulate_outer, eigendecomposition, hermitize, mmse_error_term, CMatrix,
    HermitianCovariance,
};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::rng::{complex_normal, label, stream, SimRng};
use crate::sequences::{generate_root, ZcConfig, ZcSequence};
use num_complex::Complex64;

/// Tolerance on `e_B <= e_A`.
pub const LEMMA_MARGIN_TOL: f64 = 1e-12;
/// Relative tolerance on the partial sums of the majorization chain.
pub const CHAIN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WhiteningReport {
    pub draws: usize,
    pub max_offdiag_ratio: f64,
    pub seed: Option<u64>,
}

/// Empirical covariance of `v_c[s] = z[(s + c) mod N] conj(z[s])` over offsets `c`.
pub fn frequency_covariance<I>(root: &ZcSequence, offsets: I) -> Result<HermitianCovariance>
where
    I: IntoIterator<Item = usize>,
{
    let n = root.len();
    let mut hist = vec![0usize; n];
    let mut total = 0usize;
    for c in offsets {
        hist[c % n] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::input("no offsets supplied"));
    }
    let z = root.samples();
    let mut acc = CMatrix::zeros(n, n);
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    for (c, &count) in hist.iter().enumerate() {
        if count == 0 {
            continue;
        }
        for s in 0..n {
            v[s] = z[(s + c) % n] * z[s].conj();
        }
        accumulate_outer(&mut acc, &v, count as f64 / total as f64);
    }
    hermitize(&mut acc);
    HermitianCovariance::new(acc)
}

fn offdiag_ratio(r: &HermitianCovariance) -> f64 {
    let m = r.matrix();
    let n = m.nrows();
    let mean_diag = r.trace() / n as f64;
    let mut max_off = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                max_off = max_off.max(m[(i, j)].norm());
            }
        }
    }
    max_off / mean_diag
}

/// Monte Carlo whitening check with `l` uniform over the shift table and the
/// delay `d` uniform over the full period.
pub fn verify_frequency_whitening(cfg: &ZcConfig, draws: usize, seed: u64) -> Result<WhiteningReport> {
    if draws < 1000 {
        return Err(Error::config(format!(
            "whitening check needs at least 1000 draws, got {draws}"
        )));
    }
    let root = generate_root(cfg)?;
    let table = crate::sequences::shift_table(cfg)?;
    let mut rng = stream(seed, &[label::CERTIFY, 1]);
    let n = cfg.length;
    let offsets: Vec<usize> = (0..draws)
        .map(|_| {
            let l = rng.random_range(0..table.len());
            let d = rng.random_range(0..n);
            table.offset_of(l, d)
        })
        .collect();
    let r = frequency_covariance(&root, offsets)?;
    Ok(WhiteningReport {
        draws,
        max_offdiag_ratio: offdiag_ratio(&r),
        seed: Some(seed),
    })
}

/// Exhaustive enumeration of every `(l, d)` with `d` over the full period.
pub fn verify_frequency_whitening_exhaustive(cfg: &ZcConfig) -> Result<WhiteningReport> {
    let root = generate_root(cfg)?;
    let table = crate::sequences::shift_table(cfg)?;
    let n = cfg.length;
    let offsets = (0..table.len()).flat_map(|l| (0..n).map(move |d| (l, d)));
    let offsets: Vec<usize> = offsets.map(|(l, d)| table.offset_of(l, d)).collect();
    let draws = offsets.len();
    let r = frequency_covariance(&root, offsets)?;
    Ok(WhiteningReport {
        draws,
        max_offdiag_ratio: offdiag_ratio(&r),
        seed: None,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MajorizationReport {
    /// `e_B <= e_A + LEMMA_MARGIN_TOL`.
    pub holds: bool,
    pub e_a: f64,
    pub e_b: f64,
    /// `e_A - e_B`.
    pub margin: f64,
    /// Eigenvalues: `Lambda_A <_w Lambda_B`.
    pub eigen_majorized: bool,
    /// Transformed eigenvalues `1/(1/sigma^2 + 1/lambda)` ordered the same way.
    pub transformed_majorized: bool,
}

impl MajorizationReport {
    pub fn chain_holds(&self) -> bool {
        self.eigen_majorized && self.transformed_majorized
    }
}

/// Ascending partial sums of `x` dominate those of `y` (up to `tol`).
fn ascending_dominates(x: &[f64], y: &[f64], tol: f64) -> bool {
    let (mut sx, mut sy) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sx += a;
        sy += b;
        if sx < sy - tol {
            return false;
        }
    }
    true
}

/// Checks the error-variance ordering for one `(A, B)` pair.
///
/// Violating the hypotheses (unequal diagonals, `||A||_F > ||B||_F`,
/// non-Hermitian input) is an input error, not a lemma failure.
pub fn verify_majorization_lemma(
    a: &CMatrix,
    b: &CMatrix,
    noise_variance: f64,
) -> Result<MajorizationReport> {
    if !(noise_variance > 0.0) || !noise_variance.is_finite() {
        return Err(Error::input("noise variance must be positive"));
    }
    if a.shape() != b.shape() {
        return Err(Error::input("A and B must have the same shape"));
    }
    let a = HermitianCovariance::new(a.clone())?;
    let b = HermitianCovariance::new(b.clone())?;
    for (i, (da, db)) in a.diagonal().iter().zip(b.diagonal()).enumerate() {
        if (da - db).abs() > 1e-10 {
            return Err(Error::input(format!(
                "diagonals differ at {i}: {da} vs {db}"
            )));
        }
    }
    let (fa, fb) = (a.frobenius_norm(), b.frobenius_norm());
    if fa > fb * (1.0 + 1e-12) {
        return Err(Error::input(format!(
            "requires ||A||_F <= ||B||_F, got {fa} > {fb}"
        )));
    }
    let la = a.eigenvalues();
    let lb = b.eigenvalues();
    let ga: Vec<f64> = la.iter().map(|&l| mmse_error_term(l, noise_variance)).collect();
    let gb: Vec<f64> = lb.iter().map(|&l| mmse_error_term(l, noise_variance)).collect();
    let e_a: f64 = ga.iter().sum();
    let e_b: f64 = gb.iter().sum();
    let scale = la.iter().chain(lb).map(|v| v.abs()).sum::<f64>().max(1.0);
    Ok(MajorizationReport {
        holds: e_b <= e_a + LEMMA_MARGIN_TOL,
        e_a,
        e_b,
        margin: e_a - e_b,
        eigen_majorized: ascending_dominates(la, lb, CHAIN_TOL * scale),
        transformed_majorized: ascending_dominates(&ga, &gb, CHAIN_TOL * scale),
    })
}

/// Draws a pair satisfying the lemma's hypotheses by construction.
///
/// `A` is a random full-rank covariance with unit diagonal and
/// `B = D + beta (A - D)` with `D = diag(A)` and `beta >= 1`, halving
/// `beta - 1` until `B` is positive semi-definite.
pub fn generate_lemma_pair(dim: usize, rng: &mut SimRng) -> Result<(CMatrix, CMatrix)> {
    if dim == 0 {
        return Err(Error::input("dimension must be positive"));
    }
    let cols = dim + rng.random_range(0..=dim);
    let g = CMatrix::from_fn(dim, cols, |_, _| complex_normal(rng, 1.0));
    let mut a = &g * g.adjoint();
    let inv_sqrt: Vec<f64> = (0..dim).map(|i| 1.0 / a[(i, i)].re.sqrt()).collect();
    for i in 0..dim {
        for j in 0..dim {
            a[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    hermitize(&mut a);
    for i in 0..dim {
        a[(i, i)] = Complex64::new(1.0, 0.0);
    }
    let d = CMatrix::from_diagonal(&a.diagonal());
    let mut beta: f64 = 1.0 + rng.random::<f64>() * 2.0;
    let mut b;
    let mut tries = 0;
    loop {
        b = &d + (&a - &d) * Complex64::new(beta, 0.0);
        let min = eigendecomposition(&b)?.values[0];
        if min >= 0.0 || tries >= 60 {
            break;
        }
        beta = 1.0 + 0.5 * (beta - 1.0);
        tries += 1;
    }
    if tries >= 60 {
        b = a.clone();
    }
    Ok((a, b))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CertifierReport {
    pub name: String,
    pub trials: usize,
    pub violations: usize,
    /// Smallest observed slack; negative beyond tolerance means a violation.
    pub worst_margin: f64,
    pub seed: u64,
}

/// Randomised certification over `trials` generated pairs of dimension
/// `min_dim..=max_dim` with `sigma^2` log-uniform in `[1e-2, 1e2]`.
pub fn certify_lemma(
    trials: usize,
    min_dim: usize,
    max_dim: usize,
    seed: u64,
    exec: Execution,
) -> Result<CertifierReport> {
    if min_dim == 0 || min_dim > max_dim {
        return Err(Error::config("invalid dimension range"));
    }
    let outcomes = exec.try_map(trials, |i| -> Result<(f64, bool)> {
        let mut rng = stream(seed, &[label::CERTIFY, 2, i as u64]);
        let dim = rng.random_range(min_dim..=max_dim);
        let s2 = 10f64.powf(rng.random_range(-2.0..=2.0));
        let (a, b) = generate_lemma_pair(dim, &mut rng)?;
        let rep = verify_majorization_lemma(&a, &b, s2)?;
        Ok((rep.margin, rep.holds && rep.chain_holds()))
    })?;
    let violations = outcomes.iter().filter(|(_, ok)| !ok).count();
    let worst_margin = outcomes
        .iter()
        .map(|(m, _)| *m)
        .fold(f64::INFINITY, f64::min);
    Ok(CertifierReport {
        name: "mmse_error_majorization".into(),
        trials,
        violations,
        worst_margin: if trials == 0 { 0.0 } else { worst_margin },
        seed,
    })
}
