//! Supervised pairs `(y, h z_{u,l,d} z_u^*)` cut from simulated grids.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::hyne::input_scale;
use super::mlp::InputScaling;
use super::{complex_to_real_into, SampleBatch};
use crate::channel::{default_max_delay, draw_channel, draw_noise_grid, synthesize_with_channel, ChannelScenario, PreambleChoice};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::legacy::matched_filter;
use crate::rng::{label, stream};
use crate::sequences::{generate_root, preamble, shift_table, ZcConfig};
use num_complex::Complex64;

/// Which axis of the matched-filtered grid a sample runs along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceKind {
    /// Across antennas at one (subcarrier, repetition).
    #[default]
    Spatial,
    /// Across repetitions at one (antenna, subcarrier).
    Temporal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetOptions {
    pub kind: SliceKind,
    pub scaling: InputScaling,
    /// Largest delay drawn; defaults to the zone width minus the delay spread.
    pub max_delay: Option<usize>,
    /// Fraction of samples drawn from noise-only grids (label zero).
    pub noise_fraction: f64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            kind: SliceKind::Spatial,
            scaling: InputScaling::SlicePower,
            max_delay: None,
            noise_fraction: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleOrigin {
    pub shift_index: usize,
    pub delay: usize,
    pub subcarrier: usize,
    /// Repetition for spatial slices, antenna for temporal slices.
    pub position: usize,
    pub snr_db: f64,
    pub noise_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub kind: SliceKind,
    pub scaling: InputScaling,
    pub root: usize,
    pub scenario_id: String,
    pub seed: u64,
    pub snr_schedule_db: Vec<f64>,
    pub max_delay: usize,
    pub num_shifts: usize,
    pub noise_fraction: f64,
    pub noise_only_samples: usize,
    pub noise_variance: f64,
}

/// Row-aligned real inputs and labels, each `len() x dim`, already scaled.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub inputs: Vec<f64>,
    pub labels: Vec<f64>,
    pub dim: usize,
    /// Per-row input scale; divide a row by it to return to channel units.
    pub scales: Vec<f64>,
    pub origins: Vec<SampleOrigin>,
    pub metadata: TrainingMetadata,
}

impl TrainingSet {
    /// Builds a set from raw rows with unit scales (mostly for tests).
    pub fn from_rows(inputs: Vec<f64>, labels: Vec<f64>, dim: usize, metadata: TrainingMetadata) -> Result<Self> {
        if dim == 0 || inputs.len() % dim != 0 || inputs.len() != labels.len() {
            return Err(Error::input("inputs and labels must be row-aligned"));
        }
        let n = inputs.len() / dim;
        Ok(Self {
            inputs,
            labels,
            dim,
            scales: vec![1.0; n],
            origins: Vec::new(),
            metadata,
        })
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    pub fn input(&self, k: usize) -> &[f64] {
        &self.inputs[k * self.dim..(k + 1) * self.dim]
    }

    pub fn label(&self, k: usize) -> &[f64] {
        &self.labels[k * self.dim..(k + 1) * self.dim]
    }

    pub fn batch(&self, range: std::ops::Range<usize>) -> SampleBatch<'_> {
        SampleBatch {
            inputs: &self.inputs[range.start * self.dim..range.end * self.dim],
            labels: &self.labels[range.start * self.dim..range.end * self.dim],
        }
    }

    /// Splits off the last `held_out` rows.
    pub fn split(mut self, held_out: usize) -> (TrainingSet, TrainingSet) {
        let keep = self.len().saturating_sub(held_out);
        let tail = TrainingSet {
            inputs: self.inputs.split_off(keep * self.dim),
            labels: self.labels.split_off(keep * self.dim),
            dim: self.dim,
            scales: self.scales.split_off(keep),
            origins: if self.origins.len() > keep {
                self.origins.split_off(keep)
            } else {
                Vec::new()
            },
            metadata: self.metadata.clone(),
        };
        (self, tail)
    }
}

struct Sample {
    input: Vec<Complex64>,
    label: Vec<Complex64>,
    origin: SampleOrigin,
}

/// Draws `num_samples` slices. Sample `i` uses stream `(seed, i)`, picks an
/// SNR from the schedule, a shift index and delay uniformly, synthesises a
/// full grid and cuts one slice at a uniformly chosen position.
pub fn build_training_set(
    scenario: &ChannelScenario,
    zc: &ZcConfig,
    num_samples: usize,
    snr_schedule_db: &[f64],
    opts: &DatasetOptions,
    seed: u64,
    exec: Execution,
) -> Result<TrainingSet> {
    if num_samples == 0 {
        return Err(Error::config("training set needs at least one sample"));
    }
    if !(0.0..=1.0).contains(&opts.noise_fraction) {
        return Err(Error::config("noise fraction must lie in [0, 1]"));
    }
    if scenario.num_subcarriers() != zc.length {
        return Err(Error::config("scenario and sequence lengths differ"));
    }
    let root = generate_root(zc)?;
    let table = shift_table(zc)?;
    let max_delay = opts
        .max_delay
        .unwrap_or_else(|| default_max_delay(zc, scenario.delay_spread()));
    if max_delay >= zc.length {
        return Err(Error::config(format!("max delay {max_delay} exceeds the sequence period")));
    }
    let schedule: Vec<f64> = if snr_schedule_db.is_empty() {
        vec![scenario.snr_db()]
    } else {
        snr_schedule_db.to_vec()
    };
    let scenarios: Vec<ChannelScenario> = schedule.iter().map(|&s| scenario.at_snr_db(s)).collect();
    let (m_len, s_len, t_len) = scenario.grid_shape();
    let slice_len = match opts.kind {
        SliceKind::Spatial => m_len,
        SliceKind::Temporal => t_len,
    };
    let noise_variance = scenario.noise_variance();

    let samples = exec.try_map(num_samples, |i| -> Result<Sample> {
        let mut rng = stream(seed, &[label::TRAINING_DATA, i as u64]);
        let si = rng.random_range(0..scenarios.len());
        let sc = &scenarios[si];
        let choice = PreambleChoice {
            shift_index: rng.random_range(0..table.len()),
            delay: rng.random_range(0..=max_delay),
        };
        let noise_only = opts.noise_fraction > 0.0 && rng.random::<f64>() < opts.noise_fraction;
        let s = rng.random_range(0..s_len);
        let position = match opts.kind {
            SliceKind::Spatial => rng.random_range(0..t_len),
            SliceKind::Temporal => rng.random_range(0..m_len),
        };
        let (input, label) = if noise_only {
            let grid = draw_noise_grid(sc, &mut rng);
            let y = matched_filter(&grid, &root)?;
            let input = cut(&y.y, opts.kind, s, position);
            (input, vec![Complex64::new(0.0, 0.0); slice_len])
        } else {
            let tx = preamble(&root, &table, choice.shift_index, choice.delay)?;
            let channel = draw_channel(sc, &mut rng);
            let mut clean = channel.h.clone();
            let (z, r) = (tx.samples(), root.samples());
            for ((_, sc_idx, _), v) in clean.indexed_iter_mut() {
                *v = *v * z[sc_idx] * r[sc_idx].conj();
            }
            let grid = synthesize_with_channel(sc, &tx, choice, channel, &mut rng)?;
            let y = matched_filter(&grid, &root)?;
            (cut(&y.y, opts.kind, s, position), cut(&clean, opts.kind, s, position))
        };
        Ok(Sample {
            input,
            label,
            origin: SampleOrigin {
                shift_index: choice.shift_index,
                delay: choice.delay,
                subcarrier: s,
                position,
                snr_db: schedule[si],
                noise_only,
            },
        })
    })?;

    let dim = 2 * slice_len;
    let mut inputs = vec![0.0; num_samples * dim];
    let mut labels = vec![0.0; num_samples * dim];
    let mut scales = Vec::with_capacity(num_samples);
    let mut origins = Vec::with_capacity(num_samples);
    for (k, smp) in samples.into_iter().enumerate() {
        let scale = input_scale(&smp.input, opts.scaling, noise_variance);
        let row_in = &mut inputs[k * dim..(k + 1) * dim];
        complex_to_real_into(&smp.input, row_in);
        let row_lab = &mut labels[k * dim..(k + 1) * dim];
        complex_to_real_into(&smp.label, row_lab);
        if scale != 1.0 {
            row_in.iter_mut().for_each(|v| *v *= scale);
            row_lab.iter_mut().for_each(|v| *v *= scale);
        }
        scales.push(scale);
        origins.push(smp.origin);
    }
    let noise_only_samples = origins.iter().filter(|o| o.noise_only).count();
    Ok(TrainingSet {
        inputs,
        labels,
        dim,
        scales,
        origins,
        metadata: TrainingMetadata {
            kind: opts.kind,
            scaling: opts.scaling,
            root: zc.root,
            scenario_id: scenario.id().to_string(),
            seed,
            snr_schedule_db: schedule,
            max_delay,
            num_shifts: table.len(),
            noise_fraction: opts.noise_fraction,
            noise_only_samples,
            noise_variance,
        },
    })
}

fn cut(grid: &ndarray::Array3<Complex64>, kind: SliceKind, s: usize, position: usize) -> Vec<Complex64> {
    match kind {
        SliceKind::Spatial => grid.slice(ndarray::s![.., s, position]).to_vec(),
        SliceKind::Temporal => grid.slice(ndarray::s![position, s, ..]).to_vec(),
    }
}
