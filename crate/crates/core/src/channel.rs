//! Kronecker-structured correlated Rayleigh channels and received grids.
//!
//! The channel tensor `H` has axes (antenna, subcarrier, repetition). Each of
//! `delay_spread` equal-power taps carries an `M x T` Gaussian matrix
//! `R_a^{1/2} G R_t^{T/2}`, and the taps are mapped onto subcarriers by a DFT.
//! The spatial/temporal second moment is therefore `R_a (x) R_t` on every
//! subcarrier.

use std::f64::consts::PI;

use ndarray::{Array1, Array3};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mmse::{CMatrix, HermitianCovariance};
use crate::rng::complex_normal;
use crate::sequences::{preamble, ShiftTable, ZcConfig, ZcSequence};

/// Exponential correlation model `R[i,k] = rho^|i-k| exp(j theta (i-k))`.
pub fn make_spatial_covariance(m: usize, rho: f64, theta: f64) -> Result<HermitianCovariance> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::config(format!(
            "correlation must lie in [0, 1), got {rho}"
        )));
    }
    if m == 0 {
        return Err(Error::config("at least one antenna is required"));
    }
    let matrix = CMatrix::from_fn(m, m, |i, k| {
        let lag = i as i64 - k as i64;
        Complex64::from_polar(rho.powi(lag.unsigned_abs() as i32), theta * lag as f64)
    });
    HermitianCovariance::new(matrix)
}

/// Serializable description of a scenario; the sequence length comes from
/// the [`ZcConfig`] it is paired with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub antennas: usize,
    pub repetitions: usize,
    pub spatial_correlation: f64,
    pub spatial_angle: f64,
    pub temporal_correlation: f64,
    pub delay_spread: usize,
    pub noise_variance: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            antennas: 8,
            repetitions: 1,
            spatial_correlation: 0.95,
            spatial_angle: 0.0,
            temporal_correlation: 0.0,
            delay_spread: 1,
            noise_variance: 1.0,
        }
    }
}

/// Hex SHA-256 of the canonical JSON of a scenario and its sequence config.
pub fn scenario_hash(scenario: &ScenarioConfig, zc: &ZcConfig) -> String {
    let canonical = serde_json::to_vec(&(scenario, zc)).expect("plain data serializes");
    hex_digest(&canonical)
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone)]
pub struct ChannelScenario {
    num_antennas: usize,
    num_subcarriers: usize,
    num_repetitions: usize,
    spatial: HermitianCovariance,
    temporal: HermitianCovariance,
    delay_spread: usize,
    noise_variance: f64,
    signal_power: f64,
    spatial_sqrt: CMatrix,
    temporal_sqrt_t: CMatrix,
    // tap -> subcarrier phase, already divided by sqrt(delay_spread)
    tap_phases: Vec<Complex64>,
    id: String,
}

impl ChannelScenario {
    pub fn new(
        num_subcarriers: usize,
        spatial: HermitianCovariance,
        temporal: HermitianCovariance,
        delay_spread: usize,
        noise_variance: f64,
    ) -> Result<Self> {
        let m = spatial.dim();
        let t = temporal.dim();
        if m == 0 || t == 0 || num_subcarriers == 0 {
            return Err(Error::config("scenario dimensions must be positive"));
        }
        if delay_spread == 0 || delay_spread > num_subcarriers {
            return Err(Error::config(format!(
                "delay spread must lie in [1, {num_subcarriers}], got {delay_spread}"
            )));
        }
        if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
            return Err(Error::config(format!(
                "noise variance must be finite and non-negative, got {noise_variance}"
            )));
        }
        for (name, cov) in [("spatial", &spatial), ("temporal", &temporal)] {
            let mean_diag = cov.trace() / cov.dim() as f64;
            if (mean_diag - 1.0).abs() > 1e-9 {
                return Err(Error::config(format!(
                    "{name} covariance must have unit mean diagonal, got {mean_diag}"
                )));
            }
        }
        let spatial_sqrt = spatial.sqrt();
        let temporal_sqrt_t = temporal.sqrt().transpose();
        let norm = 1.0 / (delay_spread as f64).sqrt();
        let tap_phases = (0..delay_spread)
            .flat_map(|k| {
                (0..num_subcarriers).map(move |s| {
                    let phase = -2.0 * PI * ((k * s) % num_subcarriers) as f64
                        / num_subcarriers as f64;
                    Complex64::from_polar(norm, phase)
                })
            })
            .collect();
        let id = format!(
            "m{m}-s{num_subcarriers}-t{t}-k{delay_spread}-a{}-r{}-n{:x}",
            spatial.fingerprint(),
            temporal.fingerprint(),
            noise_variance.to_bits()
        );
        Ok(Self {
            num_antennas: m,
            num_subcarriers,
            num_repetitions: t,
            spatial,
            temporal,
            delay_spread,
            noise_variance,
            signal_power: 1.0,
            spatial_sqrt,
            temporal_sqrt_t,
            tap_phases,
            id,
        })
    }

    pub fn from_config(cfg: &ScenarioConfig, zc: &ZcConfig) -> Result<Self> {
        zc.validate()?;
        let spatial = make_spatial_covariance(cfg.antennas, cfg.spatial_correlation, cfg.spatial_angle)?;
        let temporal = make_spatial_covariance(cfg.repetitions, cfg.temporal_correlation, 0.0)?;
        let mut scenario = Self::new(
            zc.length,
            spatial,
            temporal,
            cfg.delay_spread,
            cfg.noise_variance,
        )?;
        scenario.id = scenario_hash(cfg, zc);
        Ok(scenario)
    }

    /// Same scenario with the channel power set for the requested per-element SNR.
    pub fn at_snr_db(&self, snr_db: f64) -> Self {
        let mut out = self.clone();
        let ratio = 10f64.powf(snr_db / 10.0);
        out.signal_power = if self.noise_variance > 0.0 {
            ratio * self.noise_variance
        } else {
            ratio
        };
        out
    }

    /// Per-element SNR; without noise, the channel power in dB.
    pub fn snr_db(&self) -> f64 {
        let reference = if self.noise_variance > 0.0 { self.noise_variance } else { 1.0 };
        10.0 * (self.signal_power / reference).log10()
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn num_subcarriers(&self) -> usize {
        self.num_subcarriers
    }

    pub fn num_repetitions(&self) -> usize {
        self.num_repetitions
    }

    pub fn spatial_covariance(&self) -> &HermitianCovariance {
        &self.spatial
    }

    pub fn temporal_covariance(&self) -> &HermitianCovariance {
        &self.temporal
    }

    pub fn delay_spread(&self) -> usize {
        self.delay_spread
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn signal_power(&self) -> f64 {
        self.signal_power
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn grid_shape(&self) -> (usize, usize, usize) {
        (self.num_antennas, self.num_subcarriers, self.num_repetitions)
    }
}

#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// Channel tensor, axes (antenna, subcarrier, repetition).
    pub h: Array3<Complex64>,
}

impl ChannelRealization {
    pub fn spatial_slice(&self, s: usize, t: usize) -> Array1<Complex64> {
        self.h.slice(ndarray::s![.., s, t]).to_owned()
    }

    pub fn frequency_slice(&self, m: usize, t: usize) -> Array1<Complex64> {
        self.h.slice(ndarray::s![m, .., t]).to_owned()
    }

    pub fn temporal_slice(&self, m: usize, s: usize) -> Array1<Complex64> {
        self.h.slice(ndarray::s![m, s, ..]).to_owned()
    }
}

pub fn draw_channel<R: Rng + ?Sized>(scenario: &ChannelScenario, rng: &mut R) -> ChannelRealization {
    let (m, s_len, t_len) = scenario.grid_shape();
    let amp = scenario.signal_power.sqrt();
    let mut h = Array3::<Complex64>::zeros((m, s_len, t_len));
    for k in 0..scenario.delay_spread {
        let g = CMatrix::from_fn(m, t_len, |_, _| complex_normal(rng, 1.0));
        let tap = &scenario.spatial_sqrt * g * &scenario.temporal_sqrt_t;
        let phases = &scenario.tap_phases[k * s_len..(k + 1) * s_len];
        for mi in 0..m {
            for ti in 0..t_len {
                let a = tap[(mi, ti)] * amp;
                for (si, ph) in phases.iter().enumerate() {
                    h[(mi, si, ti)] += a * ph;
                }
            }
        }
    }
    ChannelRealization { h }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreambleChoice {
    pub shift_index: usize,
    pub delay: usize,
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub root: usize,
    pub choice: PreambleChoice,
    /// Total index advance `(c_l + d) mod N`.
    pub offset: usize,
    pub channel: ChannelRealization,
}

#[derive(Debug, Clone)]
pub struct ReceivedGrid {
    /// Observations, axes (antenna, subcarrier, repetition).
    pub x: Array3<Complex64>,
    pub truth: Option<GroundTruth>,
    pub snr_db: f64,
    /// Noise floor known to the receiver.
    pub noise_variance: f64,
}

impl ReceivedGrid {
    pub fn shape(&self) -> (usize, usize, usize) {
        let d = self.x.dim();
        (d.0, d.1, d.2)
    }
}

fn add_noise<R: Rng + ?Sized>(x: &mut Array3<Complex64>, variance: f64, rng: &mut R) {
    if variance == 0.0 {
        return;
    }
    x.iter_mut().for_each(|v| *v += complex_normal(rng, variance));
}

/// `X = H Z_{u,l,d} + N` with a freshly drawn channel.
pub fn synthesize_received<R: Rng + ?Sized>(
    scenario: &ChannelScenario,
    root: &ZcSequence,
    table: &ShiftTable,
    choice: PreambleChoice,
    rng: &mut R,
) -> Result<ReceivedGrid> {
    let channel = draw_channel(scenario, rng);
    let tx = preamble(root, table, choice.shift_index, choice.delay)?;
    synthesize_with_channel(scenario, &tx, choice, channel, rng)
}

/// `X = H Z + N` for a given channel and transmitted sequence `tx`.
pub fn synthesize_with_channel<R: Rng + ?Sized>(
    scenario: &ChannelScenario,
    tx: &ZcSequence,
    choice: PreambleChoice,
    channel: ChannelRealization,
    rng: &mut R,
) -> Result<ReceivedGrid> {
    let shape = scenario.grid_shape();
    if tx.len() != scenario.num_subcarriers {
        return Err(Error::config(format!(
            "sequence length {} does not match {} subcarriers",
            tx.len(),
            scenario.num_subcarriers
        )));
    }
    if channel.h.dim() != shape {
        return Err(Error::config("channel dimensions do not match scenario"));
    }
    let z = tx.samples();
    let mut x = channel.h.clone();
    for ((_, s, _), v) in x.indexed_iter_mut() {
        *v *= z[s];
    }
    add_noise(&mut x, scenario.noise_variance, rng);
    Ok(ReceivedGrid {
        x,
        truth: Some(GroundTruth {
            root: tx.root(),
            choice,
            offset: tx.origin().offset,
            channel,
        }),
        snr_db: scenario.snr_db(),
        noise_variance: scenario.noise_variance,
    })
}

/// Noise-only observation (the null hypothesis).
pub fn draw_noise_grid<R: Rng + ?Sized>(scenario: &ChannelScenario, rng: &mut R) -> ReceivedGrid {
    let mut x = Array3::<Complex64>::zeros(scenario.grid_shape());
    add_noise(&mut x, scenario.noise_variance, rng);
    ReceivedGrid {
        x,
        truth: None,
        snr_db: f64::NEG_INFINITY,
        noise_variance: scenario.noise_variance,
    }
}

/// Largest delay that keeps every multipath tap inside its shift zone.
pub fn default_max_delay(zc: &ZcConfig, delay_spread: usize) -> usize {
    zc.zone_width().saturating_sub(delay_spread)
}
