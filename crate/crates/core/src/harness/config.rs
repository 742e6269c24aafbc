//! JSON configuration files for experiments and training runs.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::ScenarioConfig;
use crate::error::{Error, Result};
use crate::legacy::min_calibration_trials;
use crate::neural::{DatasetOptions, HyneConfig, OptimizerConfig};
use crate::sequences::ZcConfig;

/// `legacy`, `hyne:<bundle id>` or `mmse_oracle`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DetectorSpec {
    Legacy,
    Hyne(String),
    MmseOracle,
}

impl fmt::Display for DetectorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetectorSpec::Legacy => f.write_str("legacy"),
            DetectorSpec::Hyne(id) => write!(f, "hyne:{id}"),
            DetectorSpec::MmseOracle => f.write_str("mmse_oracle"),
        }
    }
}

impl FromStr for DetectorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "legacy" => Ok(DetectorSpec::Legacy),
            "mmse_oracle" => Ok(DetectorSpec::MmseOracle),
            _ => match s.strip_prefix("hyne:") {
                Some(id) if valid_bundle_id(id) => Ok(DetectorSpec::Hyne(id.to_string())),
                _ => Err(Error::config(format!(
                    "unknown detector {s:?}; expected legacy, mmse_oracle or hyne:<bundle id>"
                ))),
            },
        }
    }
}

impl TryFrom<String> for DetectorSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DetectorSpec> for String {
    fn from(d: DetectorSpec) -> String {
        d.to_string()
    }
}

pub(crate) fn valid_bundle_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
        && id != "."
        && id != ".."
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub scenario: ScenarioConfig,
    pub zc: ZcConfig,
    /// Roots to evaluate; empty means the configured `zc.root` only.
    pub eval_roots: Vec<usize>,
    pub snr_list_db: Vec<f64>,
    pub trials_per_point: usize,
    pub target_pfa: f64,
    /// Null trials per threshold calibration.
    pub calibration_trials: usize,
    /// Fraction of trials that carry a preamble.
    pub class_balance: f64,
    pub master_seed: u64,
    pub detectors: Vec<DetectorSpec>,
    /// Where `hyne:<id>` bundles live; relative paths resolve against the
    /// config file's directory.
    pub bundle_dir: PathBuf,
    pub max_delay: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            scenario: ScenarioConfig::default(),
            zc: ZcConfig::default(),
            eval_roots: Vec::new(),
            snr_list_db: (0..7).map(|i| -30.0 + 5.0 * i as f64).collect(),
            trials_per_point: 20_000,
            target_pfa: 1e-3,
            calibration_trials: 100_000,
            class_balance: 0.5,
            master_seed: 1,
            detectors: vec![DetectorSpec::Legacy],
            bundle_dir: PathBuf::from("bundles"),
            max_delay: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.zc.validate()?;
        if !(self.target_pfa > 0.0 && self.target_pfa < 1.0) {
            return Err(Error::config("target_pfa must lie in (0, 1)"));
        }
        if !(self.class_balance > 0.0 && self.class_balance < 1.0) {
            return Err(Error::config("class_balance must lie in (0, 1)"));
        }
        let need = min_calibration_trials(self.target_pfa);
        if self.trials_per_point > 0 {
            if self.calibration_trials < need {
                return Err(Error::config(format!(
                    "calibration_trials {} is below {need} required for target_pfa {}",
                    self.calibration_trials, self.target_pfa
                )));
            }
            let noise = self.trials_per_point - signal_count(self.trials_per_point, self.class_balance);
            if noise < need {
                return Err(Error::config(format!(
                    "{noise} noise trials per point cannot resolve target_pfa {} (need {need})",
                    self.target_pfa
                )));
            }
        }
        if self.detectors.is_empty() {
            return Err(Error::config("no detectors configured"));
        }
        if self.snr_list_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::config("SNR values must be finite"));
        }
        for &u in &self.eval_roots {
            self.zc.with_root(u)?;
        }
        Ok(())
    }

    pub fn roots(&self) -> Vec<usize> {
        if self.eval_roots.is_empty() {
            vec![self.zc.root]
        } else {
            self.eval_roots.clone()
        }
    }

    /// Parses and validates a config file. `bundle_dir` is kept as written;
    /// see [`ExperimentConfig::bundle_root`].
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// `bundle_dir` resolved against the directory of `config_path`.
    pub fn bundle_root(&self, config_path: &Path) -> PathBuf {
        resolve(config_path, &self.bundle_dir)
    }
}

/// Number of preamble trials among the first `n` under the deterministic
/// interleave: trial `i` carries a preamble iff `floor((i+1) b) > floor(i b)`.
pub fn signal_count(n: usize, balance: f64) -> usize {
    (n as f64 * balance).floor() as usize
}

pub fn is_signal_trial(i: usize, balance: f64) -> bool {
    ((i + 1) as f64 * balance).floor() > (i as f64 * balance).floor()
}

fn resolve(config_path: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config_path.parent().unwrap_or(Path::new(".")).join(p)
    }
}

/// Settings for `train`: one root, one scenario, one bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub bundle_id: String,
    pub bundle_dir: PathBuf,
    pub scenario: ScenarioConfig,
    pub zc: ZcConfig,
    pub snr_schedule_db: Vec<f64>,
    pub num_samples: usize,
    pub dataset: DatasetOptions,
    pub optimizer: OptimizerConfig,
    /// Hidden widths; defaults to `[8n, 8n]` for slices of length `n`.
    pub hidden: Option<[usize; 2]>,
    pub hyne: HyneConfig,
    /// Also train a temporal stage when the scenario has repetitions.
    pub temporal: bool,
    pub seed: u64,
    pub target_pfa: f64,
    pub calibration_trials: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            bundle_id: "default".into(),
            bundle_dir: PathBuf::from("bundles"),
            scenario: ScenarioConfig::default(),
            zc: ZcConfig::default(),
            snr_schedule_db: vec![-20.0, -15.0, -10.0, -5.0, 0.0],
            num_samples: 100_000,
            dataset: DatasetOptions::default(),
            optimizer: OptimizerConfig::default(),
            hidden: None,
            hyne: HyneConfig::snr_derived(),
            temporal: false,
            seed: 1,
            target_pfa: 1e-3,
            calibration_trials: 100_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.zc.validate()?;
        self.optimizer.validate()?;
        self.hyne.validate()?;
        if !valid_bundle_id(&self.bundle_id) {
            return Err(Error::config(format!("invalid bundle id {:?}", self.bundle_id)));
        }
        if self.num_samples == 0 {
            return Err(Error::config("num_samples must be positive"));
        }
        if self.snr_schedule_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::config("SNR schedule values must be finite"));
        }
        if !(self.target_pfa > 0.0 && self.target_pfa < 1.0) {
            return Err(Error::config("target_pfa must lie in (0, 1)"));
        }
        if self.calibration_trials < min_calibration_trials(self.target_pfa) {
            return Err(Error::config("calibration_trials too small for target_pfa"));
        }
        if self.temporal && self.scenario.repetitions < 2 {
            return Err(Error::config("temporal stage needs at least two repetitions"));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: TrainConfig = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        cfg.bundle_dir = resolve(path, &cfg.bundle_dir);
        cfg.validate()?;
        Ok(cfg)
    }
}
