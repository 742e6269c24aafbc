//! JSON model files.
//!
//! Layout (all numbers are JSON numbers printed with shortest round-trip
//! precision, so save/load is lossless):
//!
//! ```json
//! {
//!   "format": "hyne-model",
//!   "version": 1,
//!   "model": {
//!     "layers": [
//!       {"inputs": 16, "outputs": 64, "weights": [...], "biases": [...]},
//!       ...
//!     ],
//!     "input_scaling": "slice_power"
//!   },
//!   "hyne": {"alpha": 1.0, "mode": "snr_derived"},
//!   "training": {... dataset metadata ...} | null,
//!   "optimizer": {...} | null,
//!   "train_seed": 7,
//!   "loss_history": [...]
//! }
//! ```
//!
//! `weights` is row-major with `outputs` rows of `inputs` entries.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::TrainingMetadata;
use super::hyne::HyneConfig;
use super::mlp::MlpModel;
use super::train::OptimizerConfig;
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "hyne-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub model: MlpModel,
    pub hyne: HyneConfig,
    pub training: Option<TrainingMetadata>,
    pub optimizer: Option<OptimizerConfig>,
    pub train_seed: Option<u64>,
    #[serde(default)]
    pub loss_history: Vec<f64>,
}

impl ModelFile {
    pub fn new(model: MlpModel, hyne: HyneConfig) -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_FORMAT_VERSION,
            model,
            hyne,
            training: None,
            optimizer: None,
            train_seed: None,
            loss_history: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        if !self.model.is_finite() {
            return Err(Error::numeric("refusing to save a model with non-finite parameters"));
        }
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::config(format!("not a model file (format {:?})", file.format)));
        }
        if file.version != MODEL_FORMAT_VERSION {
            return Err(Error::config(format!("unsupported model file version {}", file.version)));
        }
        MlpModel::from_layers(file.model.layers().to_vec(), file.model.input_scaling())?;
        file.hyne.validate()?;
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
