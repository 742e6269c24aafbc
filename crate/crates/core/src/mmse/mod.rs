//! Covariance algebra and closed-form MMSE combiners.
//!
//! The same filter `W = R (R + sigma^2 I)^-1` serves the frequency, spatial
//! and temporal directions; only the covariance changes. The residual error
//! of the filter has the analytic form `sum_i sigma^2 l_i / (l_i + sigma^2)`
//! over the eigenvalues of `R`, which [`error_variance`] evaluates.

pub mod certify;

use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub use certify::{
    certify_lemma, frequency_covariance, generate_lemma_pair, verify_frequency_whitening,
    verify_frequency_whitening_exhaustive, verify_majorization_lemma, CertifierReport, CHAIN_TOL, LEMMA_MARGIN_TOL,
    MajorizationReport, WhiteningReport,
};

/// Elementwise Hermitian tolerance (scaled by the largest entry when above one).
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Smallest eigenvalue accepted as positive semi-definite.
pub const PSD_TOL: f64 = 1e-10;

pub type CMatrix = DMatrix<Complex64>;

/// Ascending eigenvalues with the matching eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl Eigen {
    pub fn reconstruct(&self) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let l = self.values[j];
            scaled.column_mut(j).iter_mut().for_each(|v| *v *= l);
        }
        scaled * self.vectors.adjoint()
    }
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.norm()))
}

fn check_hermitian(m: &CMatrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::input(format!(
            "covariance must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let tol = HERMITIAN_TOL * max_abs(m).max(1.0);
    let n = m.nrows();
    for i in 0..n {
        for j in i..n {
            let dev = (m[(i, j)] - m[(j, i)].conj()).norm();
            if dev > tol {
                return Err(Error::input(format!(
                    "matrix is not Hermitian: |a[{i},{j}] - conj(a[{j},{i}])| = {dev:e}"
                )));
            }
        }
    }
    Ok(())
}

/// Hermitian eigendecomposition with eigenvalues in ascending order.
pub fn eigendecomposition(m: &CMatrix) -> Result<Eigen> {
    check_hermitian(m)?;
    let n = m.nrows();
    if n == 0 {
        return Ok(Eigen {
            values: Vec::new(),
            vectors: CMatrix::zeros(0, 0),
        });
    }
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(Eigen { values, vectors })
}

/// A Hermitian positive semi-definite matrix with a lazily computed spectrum.
#[derive(Debug, Clone)]
pub struct HermitianCovariance {
    matrix: CMatrix,
    eigen: OnceLock<Eigen>,
}

impl HermitianCovariance {
    /// Validates Hermitian symmetry and positive semi-definiteness.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let eig = eigendecomposition(&matrix)?;
        let scale = eig.values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        if let Some(&min) = eig.values.first() {
            if min < -PSD_TOL * scale {
                return Err(Error::input(format!(
                    "matrix is not positive semi-definite (min eigenvalue {min:e})"
                )));
            }
        }
        let eigen = OnceLock::new();
        let _ = eigen.set(eig);
        Ok(Self { matrix, eigen })
    }

    pub fn identity(n: usize) -> Self {
        let eigen = OnceLock::new();
        let _ = eigen.set(Eigen {
            values: vec![1.0; n],
            vectors: CMatrix::identity(n, n),
        });
        Self {
            matrix: CMatrix::identity(n, n),
            eigen,
        }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        Self::new(CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(diag[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn eigen(&self) -> &Eigen {
        self.eigen.get_or_init(|| {
            eigendecomposition(&self.matrix).expect("validated at construction")
        })
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen().values
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|v| v.re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|v| v.re).collect()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if factor < 0.0 || !factor.is_finite() {
            return Err(Error::input(format!("invalid covariance scale {factor}")));
        }
        let eig = self.eigen();
        let eigen = OnceLock::new();
        let _ = eigen.set(Eigen {
            values: eig.values.iter().map(|v| v * factor).collect(),
            vectors: eig.vectors.clone(),
        });
        Ok(Self {
            matrix: &self.matrix * Complex64::new(factor, 0.0),
            eigen,
        })
    }

    /// Hermitian square root `L` with `L L^H = R`, negative rounding clipped.
    pub fn sqrt(&self) -> CMatrix {
        let eig = self.eigen();
        let mut scaled = eig.vectors.clone();
        for (j, &l) in eig.values.iter().enumerate() {
            let s = l.max(0.0).sqrt();
            scaled.column_mut(j).iter_mut().for_each(|v| *v *= s);
        }
        scaled * eig.vectors.adjoint()
    }

    /// Short fingerprint identifying the matrix contents.
    pub fn fingerprint(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.matrix.iter() {
            for bits in [v.re.to_bits(), v.im.to_bits()] {
                h ^= bits;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        format!("{:016x}", h)
    }
}

/// A linear MMSE combiner `W = R (R + sigma^2 I)^-1`.
#[derive(Debug, Clone)]
pub struct MmseFilter {
    weights: CMatrix,
    covariance_id: String,
    noise_variance: f64,
}

impl MmseFilter {
    pub fn weights(&self) -> &CMatrix {
        &self.weights
    }

    pub fn covariance_id(&self) -> &str {
        &self.covariance_id
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// `out = W * y`.
    pub fn apply(&self, y: &[Complex64], out: &mut [Complex64]) {
        let n = self.weights.nrows();
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, yj) in y.iter().enumerate() {
                acc += self.weights[(i, j)] * yj;
            }
            *o = acc;
        }
    }
}

/// Builds the MMSE filter through a Cholesky solve of `(R + sigma^2 I) W^H = R`.
///
/// Rejects `sigma^2 = 0` unless `R` is strictly positive definite.
pub fn mmse_filter(r: &HermitianCovariance, noise_variance: f64) -> Result<MmseFilter> {
    if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
        return Err(Error::input(format!(
            "noise variance must be finite and non-negative, got {noise_variance}"
        )));
    }
    let n = r.dim();
    if noise_variance == 0.0 {
        let vals = r.eigenvalues();
        let max = vals.last().copied().unwrap_or(0.0).max(0.0);
        let min = vals.first().copied().unwrap_or(0.0);
        if n > 0 && (max == 0.0 || min <= 1e-12 * max) {
            return Err(Error::numeric(
                "singular covariance with zero noise variance has no MMSE filter",
            ));
        }
    }
    let system = r.matrix() + CMatrix::identity(n, n) * Complex64::new(noise_variance, 0.0);
    let chol = Cholesky::new(system)
        .ok_or_else(|| Error::numeric("R + sigma^2 I is not positive definite"))?;
    // (R + s I) is Hermitian, so W^H = (R + s I)^-1 R^H = (R + s I)^-1 R.
    let w_adj = chol.solve(r.matrix());
    Ok(MmseFilter {
        weights: w_adj.adjoint(),
        covariance_id: r.fingerprint(),
        noise_variance,
    })
}

/// Analytic sum of MMSE error variances, `sum_i sigma^2 l_i / (l_i + sigma^2)`.
pub fn error_variance(r: &HermitianCovariance, noise_variance: f64) -> Result<f64> {
    if !(noise_variance >= 0.0) {
        return Err(Error::input(format!(
            "noise variance must be non-negative, got {noise_variance}"
        )));
    }
    Ok(r
        .eigenvalues()
        .iter()
        .map(|&l| mmse_error_term(l, noise_variance))
        .sum())
}

#[inline]
pub(crate) fn mmse_error_term(lambda: f64, noise_variance: f64) -> f64 {
    let l = lambda.max(0.0);
    let denom = l + noise_variance;
    if denom <= 0.0 {
        0.0
    } else {
        noise_variance * l / denom
    }
}

pub fn kronecker(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Composes `R_f (x) R_a [(x) R_t]`, frequency outermost.
pub fn kronecker_covariance(
    frequency: &HermitianCovariance,
    spatial: &HermitianCovariance,
    temporal: Option<&HermitianCovariance>,
) -> Result<HermitianCovariance> {
    let mut m = kronecker(frequency.matrix(), spatial.matrix());
    if let Some(t) = temporal {
        m = kronecker(&m, t.matrix());
    }
    HermitianCovariance::new(m)
}

/// `(1/K) sum_k v_k v_k^H`.
pub fn sample_covariance<V: AsRef<[Complex64]>>(slices: &[V]) -> Result<HermitianCovariance> {
    if slices.len() < 2 {
        return Err(Error::input(format!(
            "sample covariance needs at least two slices, got {}",
            slices.len()
        )));
    }
    let n = slices[0].as_ref().len();
    let mut acc = CMatrix::zeros(n, n);
    for v in slices {
        let v = v.as_ref();
        if v.len() != n {
            return Err(Error::input("slices have inconsistent lengths"));
        }
        accumulate_outer(&mut acc, v, 1.0);
    }
    acc /= Complex64::new(slices.len() as f64, 0.0);
    hermitize(&mut acc);
    HermitianCovariance::new(acc)
}

/// `acc += weight * v v^H`.
pub(crate) fn accumulate_outer(acc: &mut CMatrix, v: &[Complex64], weight: f64) {
    let n = v.len();
    for j in 0..n {
        let cj = v[j].conj() * weight;
        for i in 0..n {
            acc[(i, j)] += v[i] * cj;
        }
    }
}

/// Removes rounding asymmetry: `m = (m + m^H) / 2`.
pub(crate) fn hermitize(m: &mut CMatrix) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

#[cfg(test)]
pub(crate) fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}
