//! The non-coherent baseline: matched filter, energy detector and
//! delay-profile peak search.

use ndarray::Array3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{draw_noise_grid, ChannelScenario, ReceivedGrid};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::rng::{label, stream};
use crate::sequences::{idft_in_place, ShiftTable, ZcSequence};

/// Received grid after conjugate-root multiplication, `Y = X Z_u^*`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedOutput {
    /// Axes (antenna, subcarrier, repetition).
    pub y: Array3<Complex64>,
    /// Root index the grid was correlated against.
    pub root: usize,
}

pub fn matched_filter(grid: &ReceivedGrid, root: &ZcSequence) -> Result<MatchedOutput> {
    let (_, s_len, _) = grid.shape();
    if root.len() != s_len {
        return Err(Error::config(format!(
            "root length {} does not match {} subcarriers",
            root.len(),
            s_len
        )));
    }
    let z = root.samples();
    let mut y = grid.x.clone();
    for ((_, s, _), v) in y.indexed_iter_mut() {
        *v *= z[s].conj();
    }
    Ok(MatchedOutput {
        y,
        root: root.root(),
    })
}

/// `sum |y|^2` over antennas, subcarriers and repetitions.
pub fn energy_statistic(y: &MatchedOutput) -> f64 {
    y.y.iter().map(|v| v.norm_sqr()).sum()
}

/// `sum |w y|^2`.
pub fn weighted_energy_statistic(y: &MatchedOutput, w: &Array3<Complex64>) -> Result<f64> {
    if w.dim() != y.y.dim() {
        return Err(Error::config(format!(
            "weight shape {:?} does not match grid shape {:?}",
            w.dim(),
            y.y.dim()
        )));
    }
    Ok(y.y.iter().zip(w.iter()).map(|(a, b)| (a * b).norm_sqr()).sum())
}

/// Detection threshold calibrated against a false-alarm budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub target_pfa: f64,
    pub gamma: f64,
    pub trials: usize,
    pub seed: u64,
    pub scenario_hash: String,
}

impl Threshold {
    /// A fixed threshold that was not calibrated (tests, manual overrides).
    pub fn fixed(gamma: f64) -> Self {
        Self {
            target_pfa: f64::NAN,
            gamma,
            trials: 0,
            seed: 0,
            scenario_hash: String::new(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            gamma: self.gamma * factor,
            ..self.clone()
        }
    }
}

/// Minimum null trials for a given false-alarm target.
pub fn min_calibration_trials(target_pfa: f64) -> usize {
    (10.0 / target_pfa).ceil() as usize
}

/// `gamma` such that a fraction `pfa` of `stats` lies at or above it.
pub fn upper_quantile(stats: &mut [f64], pfa: f64) -> f64 {
    if stats.is_empty() {
        return 0.0;
    }
    stats.sort_by(f64::total_cmp);
    let n = stats.len();
    let k = ((pfa * n as f64).ceil() as usize).clamp(1, n);
    stats[n - k]
}

/// Calibrates `gamma` as the empirical `(1 - pfa)` quantile of the statistic
/// over noise-only grids. Trial `i` draws from stream `(seed, i)`.
pub fn calibrate_threshold<F>(
    statistic: F,
    scenario: &ChannelScenario,
    target_pfa: f64,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<Threshold>
where
    F: Fn(&ReceivedGrid) -> Result<f64> + Sync + Send,
{
    if !(target_pfa > 0.0 && target_pfa < 1.0) {
        return Err(Error::config(format!(
            "target false-alarm rate must lie in (0, 1), got {target_pfa}"
        )));
    }
    if trials < min_calibration_trials(target_pfa) {
        return Err(Error::config(format!(
            "{trials} calibration trials are too few for Pfa {target_pfa} (need {})",
            min_calibration_trials(target_pfa)
        )));
    }
    let mut stats = exec.try_map(trials, |i| {
        let mut rng = stream(seed, &[label::CALIBRATION, i as u64]);
        statistic(&draw_noise_grid(scenario, &mut rng))
    })?;
    Ok(Threshold {
        target_pfa,
        gamma: upper_quantile(&mut stats, target_pfa),
        trials,
        seed,
        scenario_hash: scenario.id().to_string(),
    })
}

/// Power-delay profile indexed by cyclic index offset.
///
/// Each antenna/repetition row is inverse-transformed (unnormalised) across
/// subcarriers and the squared magnitudes are summed incoherently. For root
/// `u` an index advance `c` lands in IDFT bin `u c mod N`, so bin `u c` is
/// reported at position `c`; for `u = 1` this is the plain IDFT profile.
pub fn delay_profile(y: &MatchedOutput) -> Vec<f64> {
    let (m_len, s_len, t_len) = y.y.dim();
    let mut bins = vec![0.0; s_len];
    let mut row = vec![Complex64::new(0.0, 0.0); s_len];
    for m in 0..m_len {
        for t in 0..t_len {
            for (s, r) in row.iter_mut().enumerate() {
                *r = y.y[(m, s, t)];
            }
            idft_in_place(&mut row);
            for (b, r) in bins.iter_mut().zip(&row) {
                *b += r.norm_sqr();
            }
        }
    }
    let u = y.root % s_len.max(1);
    (0..s_len).map(|c| bins[(u * c) % s_len]).collect()
}

/// Peak search over the profile. Ties resolve to the lowest index; a peak
/// beyond the last zone is attributed to the last zone.
pub fn estimate_shift_and_ta(profile: &[f64], table: &ShiftTable) -> Result<(usize, usize)> {
    if profile.is_empty() || table.is_empty() {
        return Err(Error::Internal("empty delay profile or shift table".into()));
    }
    let mut peak = 0;
    for (k, &v) in profile.iter().enumerate() {
        if v > profile[peak] {
            peak = k;
        }
    }
    let zone = table
        .offsets()
        .iter()
        .rposition(|&c| c <= peak)
        .ok_or_else(|| Error::Internal("shift table does not start at zero".into()))?;
    Ok((zone, peak - table.offsets()[zone]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub detected: bool,
    pub statistic: f64,
    pub shift_index: Option<usize>,
    pub timing_advance: Option<usize>,
}

/// Energy decision followed, on detection only, by peak search.
pub fn decide(y: &MatchedOutput, gamma: f64, table: &ShiftTable) -> Result<DetectionResult> {
    let statistic = energy_statistic(y);
    if statistic >= gamma {
        let (l, d) = estimate_shift_and_ta(&delay_profile(y), table)?;
        Ok(DetectionResult {
            detected: true,
            statistic,
            shift_index: Some(l),
            timing_advance: Some(d),
        })
    } else {
        Ok(DetectionResult {
            detected: false,
            statistic,
            shift_index: None,
            timing_advance: None,
        })
    }
}

pub fn detect(
    grid: &ReceivedGrid,
    root: &ZcSequence,
    threshold: &Threshold,
    table: &ShiftTable,
) -> Result<DetectionResult> {
    decide(&matched_filter(grid, root)?, threshold.gamma, table)
}
