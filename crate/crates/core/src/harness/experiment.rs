//! Paired Monte Carlo evaluation of several detectors.

use std::path::Path;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bundle::load_bundle;
use super::config::{is_signal_trial, signal_count, DetectorSpec, ExperimentConfig};
use super::stats::{compute_ta_cdf, mcnemar, wilson_interval, McNemar, RateEstimate, TaCdf};
use crate::channel::{default_max_delay, draw_noise_grid, synthesize_received, ChannelScenario, PreambleChoice};
use crate::error::Result;
use crate::exec::Execution;
use crate::legacy::{calibrate_threshold, decide, energy_statistic, matched_filter, DetectionResult, Threshold};
use crate::pipeline::{calibrate_oracle, hyne_transform_stages, HyneStages, MmseOracle};
use crate::rng::{derive_seed, label, stream};
use crate::sequences::{generate_root, shift_table, ShiftTable, ZcSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics {
    pub detector: String,
    pub root: usize,
    pub snr_db: f64,
    pub threshold: f64,
    pub signal_trials: usize,
    pub noise_trials: usize,
    pub pmiss: RateEstimate,
    pub pfa: RateEstimate,
    /// Detected preambles attributed to the wrong cyclic shift.
    pub wrong_shift: usize,
    /// Signed `(c_l^ + d^) - (c_l + d)` for every detected preamble.
    pub ta_error_samples: Vec<i64>,
    pub ta_cdf: TaCdf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub root: usize,
    pub snr_db: f64,
    pub a: String,
    pub b: String,
    pub test: McNemar,
    /// Detector with significantly fewer misses at the 5% level, if any.
    pub significantly_better: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRecord {
    pub detector: String,
    pub root: usize,
    /// Set for thresholds that depend on the SNR (the oracle).
    pub snr_db: Option<f64>,
    pub gamma: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedEcho {
    pub master_seed: u64,
    pub calibration_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleEcho {
    pub id: String,
    pub bundle_hash: String,
}

/// Wall-clock figures; kept out of the serialized report so that reports
/// are byte-reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RuntimeStats {
    pub calibration_seconds: f64,
    pub evaluation_seconds: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub software: String,
    pub config: ExperimentConfig,
    pub seeds: SeedEcho,
    pub bundles: Vec<BundleEcho>,
    pub thresholds: Vec<ThresholdRecord>,
    pub points: Vec<PointMetrics>,
    pub comparisons: Vec<PairedComparison>,
    #[serde(skip)]
    pub runtime: RuntimeStats,
}

impl MetricsReport {
    pub fn point(&self, detector: &str, root: usize, snr_db: f64) -> Option<&PointMetrics> {
        self.points
            .iter()
            .find(|p| p.detector == detector && p.root == root && p.snr_db == snr_db)
    }

    pub fn comparison(&self, a: &str, b: &str, root: usize, snr_db: f64) -> Option<&PairedComparison> {
        self.comparisons
            .iter()
            .find(|c| c.a == a && c.b == b && c.root == root && c.snr_db == snr_db)
    }
}

enum Kind {
    Legacy,
    Hyne(HyneStages),
    Oracle,
}

struct Prepared {
    name: String,
    kind: Kind,
}

/// Per-root, per-SNR detector with its threshold.
enum Ready {
    Legacy(f64),
    Hyne(HyneStages, f64),
    Oracle(MmseOracle, f64),
}

impl Ready {
    fn run(&self, grid: &crate::channel::ReceivedGrid, root: &ZcSequence, table: &ShiftTable) -> Result<DetectionResult> {
        match self {
            Ready::Legacy(g) => decide(&matched_filter(grid, root)?, *g, table),
            Ready::Hyne(stages, g) => decide(&hyne_transform_stages(grid, root, stages)?, *g, table),
            Ready::Oracle(o, g) => o.detect(grid, root, &Threshold::fixed(*g), table),
        }
    }
}

struct Trial {
    signal: bool,
    true_offset: usize,
    true_shift: usize,
    results: Vec<DetectionResult>,
}

/// Runs every configured detector on common random numbers.
///
/// Thresholds are calibrated here on the experiment's own scenario and a
/// shared set of null grids. Trial `i` at SNR index `k` for root `u` draws
/// from stream `(master_seed, u, k, i)`.
pub fn run_experiment(cfg: &ExperimentConfig, bundle_dir: &Path, exec: Execution) -> Result<MetricsReport> {
    cfg.validate()?;
    let mut prepared = Vec::new();
    let mut bundles = Vec::new();
    for d in &cfg.detectors {
        let kind = match d {
            DetectorSpec::Legacy => Kind::Legacy,
            DetectorSpec::MmseOracle => Kind::Oracle,
            DetectorSpec::Hyne(id) => {
                let b = load_bundle(bundle_dir, id)?;
                b.stages.check(ChannelScenario::from_config(&cfg.scenario, &cfg.zc)?.grid_shape())?;
                bundles.push(BundleEcho {
                    id: id.clone(),
                    bundle_hash: b.manifest.bundle_hash.clone(),
                });
                Kind::Hyne(b.stages)
            }
        };
        prepared.push(Prepared {
            name: d.to_string(),
            kind,
        });
    }
    let base = ChannelScenario::from_config(&cfg.scenario, &cfg.zc)?;
    let calibration_seed = derive_seed(cfg.master_seed, &[label::CALIBRATION]);
    let mut report = MetricsReport {
        software: super::software_version(),
        config: cfg.clone(),
        seeds: SeedEcho {
            master_seed: cfg.master_seed,
            calibration_seed,
        },
        bundles,
        thresholds: Vec::new(),
        points: Vec::new(),
        comparisons: Vec::new(),
        runtime: RuntimeStats::default(),
    };
    if cfg.trials_per_point == 0 {
        return Ok(report);
    }
    let max_delay = cfg
        .max_delay
        .unwrap_or_else(|| default_max_delay(&cfg.zc, cfg.scenario.delay_spread));
    let n = cfg.trials_per_point;

    for u in cfg.roots() {
        let zc = cfg.zc.with_root(u)?;
        let root = generate_root(&zc)?;
        let table = shift_table(&zc)?;
        let calibrate = |stat: &(dyn Fn(&crate::channel::ReceivedGrid) -> Result<f64> + Sync)| {
            calibrate_threshold(stat, &base, cfg.target_pfa, cfg.calibration_trials, calibration_seed, exec)
        };
        let t0 = Instant::now();
        let mut fixed: Vec<Option<f64>> = Vec::new();
        for p in &prepared {
            let gamma = match &p.kind {
                Kind::Legacy => Some(calibrate(&|g| Ok(energy_statistic(&matched_filter(g, &root)?)))?.gamma),
                Kind::Hyne(stages) => {
                    Some(calibrate(&|g| Ok(energy_statistic(&hyne_transform_stages(g, &root, stages)?)))?.gamma)
                }
                Kind::Oracle => None,
            };
            if let Some(g) = gamma {
                report.thresholds.push(ThresholdRecord {
                    detector: p.name.clone(),
                    root: u,
                    snr_db: None,
                    gamma: g,
                    trials: cfg.calibration_trials,
                });
            }
            fixed.push(gamma);
        }
        report.runtime.calibration_seconds += t0.elapsed().as_secs_f64();

        for (k, &snr) in cfg.snr_list_db.iter().enumerate() {
            let scenario = base.at_snr_db(snr);
            let t0 = Instant::now();
            let mut ready = Vec::new();
            for (p, gamma) in prepared.iter().zip(&fixed) {
                ready.push(match &p.kind {
                    Kind::Legacy => Ready::Legacy(gamma.expect("calibrated above")),
                    Kind::Hyne(stages) => Ready::Hyne(stages.clone(), gamma.expect("calibrated above")),
                    Kind::Oracle => {
                        let oracle = MmseOracle::for_scenario(&scenario)?;
                        let th = calibrate_oracle(&oracle, &root, &base, cfg.target_pfa, cfg.calibration_trials, calibration_seed, exec)?;
                        report.thresholds.push(ThresholdRecord {
                            detector: p.name.clone(),
                            root: u,
                            snr_db: Some(snr),
                            gamma: th.gamma,
                            trials: cfg.calibration_trials,
                        });
                        Ready::Oracle(oracle, th.gamma)
                    }
                });
            }
            report.runtime.calibration_seconds += t0.elapsed().as_secs_f64();

            let t0 = Instant::now();
            let trials = exec.try_map(n, |i| -> Result<Trial> {
                let mut rng = stream(cfg.master_seed, &[label::EVALUATION, u as u64, k as u64, i as u64]);
                let signal = is_signal_trial(i, cfg.class_balance);
                let (grid, choice) = if signal {
                    let choice = PreambleChoice {
                        shift_index: rng.random_range(0..table.len()),
                        delay: rng.random_range(0..=max_delay),
                    };
                    (synthesize_received(&scenario, &root, &table, choice, &mut rng)?, choice)
                } else {
                    (draw_noise_grid(&scenario, &mut rng), PreambleChoice { shift_index: 0, delay: 0 })
                };
                let results = ready.iter().map(|r| r.run(&grid, &root, &table)).collect::<Result<Vec<_>>>()?;
                Ok(Trial {
                    signal,
                    true_offset: table.offsets()[choice.shift_index] + choice.delay,
                    true_shift: choice.shift_index,
                    results,
                })
            })?;
            report.runtime.evaluation_seconds += t0.elapsed().as_secs_f64();
            report.runtime.trials += n;

            let n_signal = signal_count(n, cfg.class_balance);
            let mut missed: Vec<Vec<bool>> = Vec::new();
            for (j, p) in prepared.iter().enumerate() {
                let mut misses = Vec::with_capacity(n_signal);
                let mut false_alarms = 0;
                let mut wrong_shift = 0;
                let mut ta = Vec::new();
                for t in &trials {
                    let r = &t.results[j];
                    if t.signal {
                        misses.push(!r.detected);
                        if let (Some(l), Some(d)) = (r.shift_index, r.timing_advance) {
                            if l != t.true_shift {
                                wrong_shift += 1;
                            }
                            ta.push((table.offsets()[l] + d) as i64 - t.true_offset as i64);
                        }
                    } else if r.detected {
                        false_alarms += 1;
                    }
                }
                let miss_count = misses.iter().filter(|&&m| m).count();
                report.points.push(PointMetrics {
                    detector: p.name.clone(),
                    root: u,
                    snr_db: snr,
                    threshold: match &ready[j] {
                        Ready::Legacy(g) | Ready::Hyne(_, g) | Ready::Oracle(_, g) => *g,
                    },
                    signal_trials: n_signal,
                    noise_trials: n - n_signal,
                    pmiss: wilson_interval(miss_count, n_signal),
                    pfa: wilson_interval(false_alarms, n - n_signal),
                    wrong_shift,
                    ta_cdf: compute_ta_cdf(&ta),
                    ta_error_samples: ta,
                });
                missed.push(misses);
            }
            for a in 0..prepared.len() {
                for b in (a + 1)..prepared.len() {
                    let test = mcnemar(&missed[a], &missed[b]);
                    let significantly_better = if test.p_a_worse < 0.05 {
                        Some(prepared[b].name.clone())
                    } else if test.p_b_worse < 0.05 {
                        Some(prepared[a].name.clone())
                    } else {
                        None
                    };
                    report.comparisons.push(PairedComparison {
                        root: u,
                        snr_db: snr,
                        a: prepared[a].name.clone(),
                        b: prepared[b].name.clone(),
                        test,
                        significantly_better,
                    });
                }
            }
        }
    }
    Ok(report)
}
