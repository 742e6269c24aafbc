//! End-to-end HyNE detector and the MMSE genie reference.
//!
//! Both run the matched filter first, transform every spatial slice, and
//! then reuse the legacy energy decision and delay-profile peak search on
//! the transformed grid.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelScenario, ReceivedGrid};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::legacy::{calibrate_threshold, decide, energy_statistic, matched_filter, DetectionResult, MatchedOutput, Threshold};
use crate::mmse::{mmse_filter, HermitianCovariance, MmseFilter};
use crate::neural::{measured_snr, HyneConfig, InputScaling, MlpModel};
use crate::sequences::{ShiftTable, ZcSequence};

/// One network plus the blend rule wrapped around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyneStage {
    pub model: MlpModel,
    pub config: HyneConfig,
}

impl HyneStage {
    pub fn new(model: MlpModel, config: HyneConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { model, config })
    }

    fn check(&self, n: usize, what: &str) -> Result<()> {
        if self.model.input_dim() != 2 * n || self.model.output_dim() != 2 * n {
            return Err(Error::config(format!(
                "{what} model dims {:?} do not fit slices of length {n}",
                self.model.layer_dims()
            )));
        }
        Ok(())
    }
}

/// Spatial stage, optionally followed by a temporal stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyneStages {
    pub spatial: HyneStage,
    pub temporal: Option<HyneStage>,
}

impl HyneStages {
    pub fn spatial_only(stage: HyneStage) -> Self {
        Self {
            spatial: stage,
            temporal: None,
        }
    }

    /// Validates the stage dims against a grid shape `(M, S, T)`.
    pub fn check(&self, shape: (usize, usize, usize)) -> Result<()> {
        self.spatial.check(shape.0, "spatial")?;
        if let Some(t) = &self.temporal {
            if shape.2 > 1 {
                t.check(shape.2, "temporal")?;
            }
        }
        Ok(())
    }
}

/// Applies `stage` to every slice of `y` along `axis` (0 antennas, 2
/// repetitions). `alpha = 0` leaves `y` untouched.
fn apply_stage(y: &mut Array3<Complex64>, axis: usize, stage: &HyneStage, alpha: f64, noise_variance: f64) -> Result<()> {
    if alpha == 0.0 {
        return Ok(());
    }
    let (m_len, s_len, t_len) = y.dim();
    let (n, outer) = if axis == 0 {
        (m_len, s_len * t_len)
    } else {
        (t_len, m_len * s_len)
    };
    let locate = |row: usize, k: usize| -> (usize, usize, usize) {
        if axis == 0 {
            (k, row / t_len, row % t_len)
        } else {
            (row / s_len, row % s_len, k)
        }
    };
    let mut x = Array2::<f64>::zeros((outer, 2 * n));
    let mut scales = vec![1.0; outer];
    for row in 0..outer {
        if stage.model.input_scaling() == InputScaling::SlicePower {
            let power: f64 = (0..n).map(|k| y[locate(row, k)].norm_sqr()).sum::<f64>() / n as f64;
            let denom = (noise_variance.max(0.0) + power).sqrt();
            if denom > 0.0 && denom.is_finite() {
                scales[row] = 1.0 / denom;
            }
        }
        for k in 0..n {
            let v = y[locate(row, k)] * scales[row];
            x[(row, k)] = v.re;
            x[(row, n + k)] = v.im;
        }
    }
    let out = stage.model.forward_batch(x.view())?;
    for row in 0..outer {
        let inv = 1.0 / scales[row];
        for k in 0..n {
            let nn = Complex64::new(out[(row, k)] * inv, out[(row, n + k)] * inv);
            let cell = &mut y[locate(row, k)];
            *cell = if alpha == 1.0 {
                nn
            } else {
                *cell * (1.0 - alpha) + nn * alpha
            };
        }
    }
    Ok(())
}

/// Matched filter followed by the HyNE stages.
///
/// In [`crate::neural::AlphaMode::SnrDerived`] the blend weight is computed
/// once per grid from the measured SNR of the whole matched-filtered grid, so
/// every slice of a grid sees the same map.
pub fn hyne_transform_stages(grid: &ReceivedGrid, root: &ZcSequence, stages: &HyneStages) -> Result<MatchedOutput> {
    stages.check(grid.shape())?;
    let mut y = matched_filter(grid, root)?;
    let rho = measured_snr(y.y.iter(), grid.noise_variance);
    let alpha = stages.spatial.config.resolve(rho);
    apply_stage(&mut y.y, 0, &stages.spatial, alpha, grid.noise_variance)?;
    if let Some(t) = &stages.temporal {
        if grid.shape().2 > 1 {
            let alpha = t.config.resolve(rho);
            apply_stage(&mut y.y, 2, t, alpha, grid.noise_variance)?;
        }
    }
    Ok(y)
}

/// A HyNE detector with its own calibrated threshold.
#[derive(Debug, Clone)]
pub struct HynePipeline {
    root: ZcSequence,
    stages: HyneStages,
    threshold: Threshold,
    table: ShiftTable,
}

impl HynePipeline {
    /// Calibrates the threshold on this pipeline's own null statistic.
    #[allow(clippy::too_many_arguments)]
    pub fn calibrate(
        root: ZcSequence,
        table: ShiftTable,
        stages: HyneStages,
        scenario: &ChannelScenario,
        target_pfa: f64,
        trials: usize,
        seed: u64,
        exec: Execution,
    ) -> Result<Self> {
        stages.check(scenario.grid_shape())?;
        let threshold = calibrate_threshold(
            |g| Ok(energy_statistic(&hyne_transform_stages(g, &root, &stages)?)),
            scenario,
            target_pfa,
            trials,
            seed,
            exec,
        )?;
        Ok(Self {
            root,
            stages,
            threshold,
            table,
        })
    }

    /// Reassembles a pipeline from a stored threshold.
    pub fn from_parts(root: ZcSequence, table: ShiftTable, stages: HyneStages, threshold: Threshold) -> Self {
        Self {
            root,
            stages,
            threshold,
            table,
        }
    }

    pub fn root(&self) -> &ZcSequence {
        &self.root
    }

    pub fn stages(&self) -> &HyneStages {
        &self.stages
    }

    pub fn threshold(&self) -> &Threshold {
        &self.threshold
    }

    pub fn shift_table(&self) -> &ShiftTable {
        &self.table
    }
}

pub fn hyne_transform(grid: &ReceivedGrid, pipeline: &HynePipeline) -> Result<MatchedOutput> {
    hyne_transform_stages(grid, &pipeline.root, &pipeline.stages)
}

pub fn hyne_detect(grid: &ReceivedGrid, pipeline: &HynePipeline) -> Result<DetectionResult> {
    decide(&hyne_transform(grid, pipeline)?, pipeline.threshold.gamma, &pipeline.table)
}

/// Genie combiner `U = R (R + sigma^2 I)^{-1}` built from the true
/// covariance `R` of the received spatial channel slice.
#[derive(Debug, Clone)]
pub struct MmseOracle {
    filter: MmseFilter,
}

impl MmseOracle {
    pub fn new(covariance: &HermitianCovariance, noise_variance: f64) -> Result<Self> {
        Ok(Self {
            filter: mmse_filter(covariance, noise_variance)?,
        })
    }

    /// Oracle for a scenario at its current SNR.
    pub fn for_scenario(scenario: &ChannelScenario) -> Result<Self> {
        let r = scenario.spatial_covariance().scaled(scenario.signal_power())?;
        Self::new(&r, scenario.noise_variance())
    }

    pub fn filter(&self) -> &MmseFilter {
        &self.filter
    }

    pub fn transform(&self, grid: &ReceivedGrid, root: &ZcSequence) -> Result<MatchedOutput> {
        let (m_len, s_len, t_len) = grid.shape();
        if self.filter.weights().nrows() != m_len {
            return Err(Error::config(format!(
                "oracle built for {} antennas, grid has {m_len}",
                self.filter.weights().nrows()
            )));
        }
        let mut y = matched_filter(grid, root)?;
        let mut inp = vec![Complex64::new(0.0, 0.0); m_len];
        let mut out = vec![Complex64::new(0.0, 0.0); m_len];
        for s in 0..s_len {
            for t in 0..t_len {
                for (m, v) in inp.iter_mut().enumerate() {
                    *v = y.y[(m, s, t)];
                }
                self.filter.apply(&inp, &mut out);
                for (m, v) in out.iter().enumerate() {
                    y.y[(m, s, t)] = *v;
                }
            }
        }
        Ok(y)
    }

    pub fn statistic(&self, grid: &ReceivedGrid, root: &ZcSequence) -> Result<f64> {
        Ok(energy_statistic(&self.transform(grid, root)?))
    }

    pub fn detect(
        &self,
        grid: &ReceivedGrid,
        root: &ZcSequence,
        threshold: &Threshold,
        table: &ShiftTable,
    ) -> Result<DetectionResult> {
        decide(&self.transform(grid, root)?, threshold.gamma, table)
    }
}

pub fn mmse_oracle_detect(
    grid: &ReceivedGrid,
    root: &ZcSequence,
    covariance: &HermitianCovariance,
    noise_variance: f64,
    threshold: &Threshold,
    table: &ShiftTable,
) -> Result<DetectionResult> {
    MmseOracle::new(covariance, noise_variance)?.detect(grid, root, threshold, table)
}

/// Null-calibrated threshold for the oracle at the scenario's SNR.
pub fn calibrate_oracle(
    oracle: &MmseOracle,
    root: &ZcSequence,
    scenario: &ChannelScenario,
    target_pfa: f64,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<Threshold> {
    calibrate_threshold(|g| oracle.statistic(g, root), scenario, target_pfa, trials, seed, exec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{synthesize_received, PreambleChoice, ScenarioConfig};
    use crate::legacy::detect;
    use crate::neural::DenseLayer;
    use crate::rng::stream;
    use crate::sequences::{generate_root, shift_table, ZcConfig};

    fn setup(noise: f64) -> (ChannelScenario, ZcSequence, ShiftTable) {
        let zc = ZcConfig::default();
        let cfg = ScenarioConfig {
            noise_variance: noise,
            ..ScenarioConfig::default()
        };
        (
            ChannelScenario::from_config(&cfg, &zc).unwrap(),
            generate_root(&zc).unwrap(),
            shift_table(&zc).unwrap(),
        )
    }

    fn stage(model: MlpModel, alpha: f64) -> HyneStages {
        HyneStages::spatial_only(HyneStage::new(model, HyneConfig::fixed(alpha).unwrap()).unwrap())
    }

    /// Network computing `relu(x) - relu(-x) = x`.
    fn identity_model(n: usize) -> MlpModel {
        let d = 2 * n;
        let mut l1 = DenseLayer::zeros(d, 2 * d);
        let mut l2 = DenseLayer::zeros(2 * d, 2 * d);
        let mut l3 = DenseLayer::zeros(2 * d, d);
        for i in 0..d {
            l1.weights[i * d + i] = 1.0;
            l1.weights[(d + i) * d + i] = -1.0;
        }
        for i in 0..2 * d {
            l2.weights[i * 2 * d + i] = 1.0;
        }
        for i in 0..d {
            l3.weights[i * 2 * d + i] = 1.0;
            l3.weights[i * 2 * d + d + i] = -1.0;
        }
        MlpModel::from_layers(vec![l1, l2, l3], InputScaling::SlicePower).unwrap()
    }

    #[test]
    fn zero_alpha_is_the_matched_filter() {
        let (sc, root, table) = setup(1.0);
        let mut rng = stream(1, &[]);
        let model = MlpModel::initialized(MlpModel::default_dims(8), &mut rng);
        let grid = synthesize_received(&sc.at_snr_db(-5.0), &root, &table, PreambleChoice { shift_index: 2, delay: 3 }, &mut rng).unwrap();
        let a = hyne_transform_stages(&grid, &root, &stage(model, 0.0)).unwrap();
        assert_eq!(a, matched_filter(&grid, &root).unwrap());
    }

    #[test]
    fn zero_model_at_full_alpha_zeroes_grid() {
        let (sc, root, _) = setup(1.0);
        let mut rng = stream(2, &[]);
        let grid = crate::channel::draw_noise_grid(&sc, &mut rng);
        let out = hyne_transform_stages(&grid, &root, &stage(MlpModel::zeros(MlpModel::default_dims(8)), 1.0)).unwrap();
        assert!(out.y.iter().all(|v| *v == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn identity_network_preserves_grid() {
        let (sc, root, _) = setup(1.0);
        let mut rng = stream(3, &[]);
        let grid = crate::channel::draw_noise_grid(&sc, &mut rng);
        let out = hyne_transform_stages(&grid, &root, &stage(identity_model(8), 1.0)).unwrap();
        let mf = matched_filter(&grid, &root).unwrap();
        for (a, b) in out.y.iter().zip(mf.y.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let (sc, root, _) = setup(1.0);
        let mut rng = stream(4, &[]);
        let grid = crate::channel::draw_noise_grid(&sc, &mut rng);
        let err = hyne_transform_stages(&grid, &root, &stage(MlpModel::zeros([4, 8, 8, 4]), 1.0)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn noiseless_preamble_is_found_through_identity_network() {
        let (sc, root, table) = setup(0.0);
        let mut rng = stream(5, &[]);
        let pipeline = HynePipeline::from_parts(root.clone(), table.clone(), stage(identity_model(8), 1.0), Threshold::fixed(1.0));
        for (l, d) in [(0, 0), (3, 7), (9, 12)] {
            let grid = synthesize_received(&sc, &root, &table, PreambleChoice { shift_index: l, delay: d }, &mut rng).unwrap();
            let r = hyne_detect(&grid, &pipeline).unwrap();
            assert!(r.detected);
            assert_eq!((r.shift_index, r.timing_advance), (Some(l), Some(d)));
        }
    }

    #[test]
    fn identity_covariance_oracle_rescales_legacy() {
        let (sc, root, table) = setup(1.0);
        let sigma2 = 0.5;
        let oracle = MmseOracle::new(&HermitianCovariance::identity(8), sigma2).unwrap();
        let factor = 1.0 / ((1.0 + sigma2) * (1.0 + sigma2));
        let gamma = 1200.0;
        let mut rng = stream(6, &[]);
        for i in 0..50 {
            let grid = if i % 2 == 0 {
                crate::channel::draw_noise_grid(&sc, &mut rng)
            } else {
                synthesize_received(&sc.at_snr_db(-14.0), &root, &table, PreambleChoice { shift_index: 1, delay: 2 }, &mut rng).unwrap()
            };
            let legacy = detect(&grid, &root, &Threshold::fixed(gamma), &table).unwrap();
            let o = oracle.detect(&grid, &root, &Threshold::fixed(gamma * factor), &table).unwrap();
            assert!((o.statistic - legacy.statistic * factor).abs() < 1e-9 * legacy.statistic);
            if (legacy.statistic - gamma).abs() > 1e-6 * gamma {
                assert_eq!(o.detected, legacy.detected);
                assert_eq!(o.timing_advance, legacy.timing_advance);
            }
        }
        let r = HermitianCovariance::identity(8);
        let via_fn = mmse_oracle_detect(
            &crate::channel::draw_noise_grid(&sc, &mut stream(7, &[])),
            &root,
            &r,
            sigma2,
            &Threshold::fixed(1.0),
            &table,
        )
        .unwrap();
        assert!(via_fn.statistic > 0.0);
    }
}
