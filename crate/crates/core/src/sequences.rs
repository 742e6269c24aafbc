//! Zadoff-Chu root sequences, cyclic shifts and their CAZAC properties.
//!
//! A root sequence of prime length `N` is
//! `z_u[n] = exp(-j*pi*u*n*(n+1)/N)`. Preambles are cyclic shifts of the root;
//! the propagation delay is folded into the same index shift, so a preamble
//! with shift zone `l` and delay `d` is the root advanced by
//! `(c_l + d) mod N`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sequence length of the short preamble format.
pub const DEFAULT_LENGTH: usize = 139;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZcConfig {
    /// Root sequence index `u`.
    pub root: usize,
    /// Sequence length `N_z`, prime.
    pub length: usize,
    /// Cyclic-shift stride in samples. Zero means a single unrestricted shift.
    pub n_cs: usize,
    /// Number of cyclic shifts `L`.
    pub num_shifts: usize,
}

impl Default for ZcConfig {
    fn default() -> Self {
        Self {
            root: 1,
            length: DEFAULT_LENGTH,
            n_cs: 13,
            num_shifts: 10,
        }
    }
}

impl ZcConfig {
    pub fn new(root: usize, length: usize, n_cs: usize, num_shifts: usize) -> Result<Self> {
        let cfg = Self {
            root,
            length,
            n_cs,
            num_shifts,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Single unrestricted shift covering the whole period.
    pub fn unrestricted(root: usize, length: usize) -> Result<Self> {
        Self::new(root, length, 0, 1)
    }

    pub fn validate(&self) -> Result<()> {
        if !is_prime(self.length) {
            return Err(Error::config(format!(
                "sequence length {} is not prime",
                self.length
            )));
        }
        if self.root == 0 || self.root >= self.length {
            return Err(Error::config(format!(
                "root index {} outside [1, {}]",
                self.root,
                self.length - 1
            )));
        }
        if self.num_shifts == 0 {
            return Err(Error::config("at least one cyclic shift is required"));
        }
        if self.n_cs == 0 && self.num_shifts != 1 {
            return Err(Error::config(
                "n_cs = 0 (unrestricted) admits exactly one cyclic shift",
            ));
        }
        if self.n_cs * self.num_shifts > self.length {
            return Err(Error::config(format!(
                "{} shifts of stride {} exceed the period {}",
                self.num_shifts, self.n_cs, self.length
            )));
        }
        Ok(())
    }

    /// Width of one cyclic-shift zone in samples.
    pub fn zone_width(&self) -> usize {
        if self.n_cs == 0 {
            self.length
        } else {
            self.n_cs
        }
    }

    pub fn with_root(&self, root: usize) -> Result<Self> {
        Self::new(root, self.length, self.n_cs, self.num_shifts)
    }
}

pub fn is_prime(n: usize) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut d = 3;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

/// Modular inverse of `a` modulo the prime `p`.
#[cfg(test)]
pub(crate) fn mod_inverse(a: usize, p: usize) -> usize {
    // Fermat: a^(p-2) mod p
    let (mut base, mut exp, mut acc) = ((a % p) as u128, (p - 2) as u128, 1u128);
    let m = p as u128;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % m;
        }
        base = base * base % m;
        exp >>= 1;
    }
    acc as usize
}

/// Where a sequence came from: its root and the total index advance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceOrigin {
    pub root: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZcSequence {
    samples: Vec<Complex64>,
    origin: SequenceOrigin,
}

impl ZcSequence {
    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn origin(&self) -> SequenceOrigin {
        self.origin
    }

    pub fn root(&self) -> usize {
        self.origin.root
    }

    pub fn autocorrelation(&self, c: usize) -> Complex64 {
        periodic_autocorrelation(&self.samples, c)
    }
}

/// Generates the root sequence `z_u`.
pub fn generate_root(cfg: &ZcConfig) -> Result<ZcSequence> {
    cfg.validate()?;
    let n_z = cfg.length;
    let two_n = 2 * n_z as u128;
    let samples = (0..n_z)
        .map(|n| {
            // u*n*(n+1) reduced modulo 2N keeps the phase argument small and exact.
            let k = (cfg.root as u128 * n as u128 % two_n) * (n as u128 + 1) % two_n;
            Complex64::from_polar(1.0, -PI * k as f64 / n_z as f64)
        })
        .collect();
    Ok(ZcSequence {
        samples,
        origin: SequenceOrigin {
            root: cfg.root,
            offset: 0,
        },
    })
}

/// Advances the sequence index: `out[n] = seq[(n + c) mod N]`.
pub fn cyclic_shift(seq: &ZcSequence, c: usize) -> ZcSequence {
    let n_z = seq.len();
    if n_z == 0 {
        return seq.clone();
    }
    let c = c % n_z;
    let mut samples = Vec::with_capacity(n_z);
    samples.extend_from_slice(&seq.samples[c..]);
    samples.extend_from_slice(&seq.samples[..c]);
    ZcSequence {
        samples,
        origin: SequenceOrigin {
            root: seq.origin.root,
            offset: (seq.origin.offset + c) % n_z,
        },
    }
}

/// `sum_n x[n] * conj(x[(n + c) mod N])`.
pub fn periodic_autocorrelation(x: &[Complex64], c: usize) -> Complex64 {
    let n = x.len();
    if n == 0 {
        return Complex64::new(0.0, 0.0);
    }
    let c = c % n;
    (0..n).map(|i| x[i] * x[(i + c) % n].conj()).sum()
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalised forward DFT: `X[k] = sum_n x[n] exp(-j2*pi*k*n/N)`.
pub fn dft(x: &[Complex64]) -> Vec<Complex64> {
    let mut buf = x.to_vec();
    dft_in_place(&mut buf);
    buf
}

/// Unnormalised inverse DFT: `x[n] = sum_k X[k] exp(+j2*pi*k*n/N)`.
///
/// `idft(dft(x)) = N * x`; use [`inverse_dft`] for the normalised inverse.
pub fn idft(x: &[Complex64]) -> Vec<Complex64> {
    let mut buf = x.to_vec();
    idft_in_place(&mut buf);
    buf
}

/// Normalised inverse, so `inverse_dft(dft(x)) = x`.
pub fn inverse_dft(x: &[Complex64]) -> Vec<Complex64> {
    let scale = 1.0 / x.len().max(1) as f64;
    let mut out = idft(x);
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

pub(crate) fn dft_in_place(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()).process(buf));
}

pub(crate) fn idft_in_place(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()).process(buf));
}

/// Start offsets `c_l = l * n_cs` of the cyclic-shift zones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftTable {
    offsets: Vec<usize>,
    zone_width: usize,
    length: usize,
}

impl ShiftTable {
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn zone_width(&self) -> usize {
        self.zone_width
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Total index advance of shift `l` with delay `d`.
    pub fn offset_of(&self, l: usize, d: usize) -> usize {
        (self.offsets[l] + d) % self.length
    }
}

pub fn shift_table(cfg: &ZcConfig) -> Result<ShiftTable> {
    cfg.validate()?;
    let offsets = (0..cfg.num_shifts).map(|l| l * cfg.n_cs).collect();
    Ok(ShiftTable {
        offsets,
        zone_width: cfg.zone_width(),
        length: cfg.length,
    })
}

/// The transmitted sequence `z_{u,l,d}` for shift zone `l` and delay `d`.
pub fn preamble(root: &ZcSequence, table: &ShiftTable, l: usize, d: usize) -> Result<ZcSequence> {
    if l >= table.len() {
        return Err(Error::config(format!(
            "shift index {l} outside table of {} shifts",
            table.len()
        )));
    }
    if root.len() != table.length() {
        return Err(Error::config("root length does not match shift table"));
    }
    Ok(cyclic_shift(root, table.offset_of(l, d)))
}

/// Writes `n,re,im` rows.
pub fn write_csv<W: Write>(seq: &ZcSequence, mut out: W) -> Result<()> {
    writeln!(out, "n,re,im")?;
    for (n, v) in seq.samples.iter().enumerate() {
        writeln!(out, "{n},{:?},{:?}", v.re, v.im)?;
    }
    Ok(())
}
