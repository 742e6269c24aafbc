//! Trained model bundles: model files, a calibrated threshold and a manifest.
//!
//! A bundle `<dir>/<id>/` holds `spatial.json`, optionally `temporal.json`,
//! `threshold.json` and `bundle.json`. The bundle hash is the SHA-256 over
//! `name NUL sha256(file) LF` for every file in manifest order.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{valid_bundle_id, TrainConfig};
use crate::channel::{hex_digest, scenario_hash, ChannelScenario};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::legacy::Threshold;
use crate::neural::{
    build_training_set, fit_alpha, train, AlphaMode, DatasetOptions, MlpModel, ModelFile, SliceKind,
};
use crate::pipeline::{HynePipeline, HyneStage, HyneStages};
use crate::rng::{derive_seed, label, stream};
use crate::sequences::{generate_root, shift_table};

pub const BUNDLE_FORMAT: &str = "hyne-bundle";
pub const MANIFEST_FILE: &str = "bundle.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleFile {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format: String,
    pub id: String,
    pub root: usize,
    pub scenario_hash: String,
    pub train_config: TrainConfig,
    pub files: Vec<BundleFile>,
    pub bundle_hash: String,
}

#[derive(Debug, Clone)]
pub struct Bundle {
    pub manifest: BundleManifest,
    pub stages: HyneStages,
    pub threshold: Threshold,
}

fn bundle_hash(files: &[BundleFile]) -> String {
    let mut buf = Vec::new();
    for f in files {
        buf.extend_from_slice(f.name.as_bytes());
        buf.push(0);
        buf.extend_from_slice(f.sha256.as_bytes());
        buf.push(b'\n');
    }
    hex_digest(&buf)
}

pub fn bundle_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(id)
}

fn train_stage(
    cfg: &TrainConfig,
    scenario: &ChannelScenario,
    kind: SliceKind,
    exec: Execution,
) -> Result<ModelFile> {
    let opts = DatasetOptions {
        kind,
        ..cfg.dataset.clone()
    };
    let tag = kind as u64;
    let data = build_training_set(
        scenario,
        &cfg.zc,
        cfg.num_samples,
        &cfg.snr_schedule_db,
        &opts,
        derive_seed(cfg.seed, &[label::TRAINING_DATA, tag]),
        exec,
    )?;
    let n = data.dim / 2;
    let [h1, h2] = cfg.hidden.unwrap_or([8 * n, 8 * n]);
    let init = MlpModel::initialized([2 * n, h1, h2, 2 * n], &mut stream(cfg.seed, &[label::INIT, tag]))
        .with_input_scaling(opts.scaling);
    let train_seed = derive_seed(cfg.seed, &[label::TRAINING, tag]);
    let outcome = train(&init, &data, &cfg.optimizer, train_seed, exec)?;
    let hyne = match cfg.hyne.mode {
        AlphaMode::Trainable => fit_alpha(&outcome.model, &data, 2000, 1.0)?,
        _ => cfg.hyne,
    };
    let mut file = ModelFile::new(outcome.model, hyne);
    file.training = Some(data.metadata.clone());
    file.optimizer = Some(cfg.optimizer.clone());
    file.train_seed = Some(train_seed);
    file.loss_history = outcome.loss_history;
    Ok(file)
}

/// Trains on the single configured root and scenario, calibrates the
/// pipeline threshold and writes the bundle.
pub fn train_command(cfg: &TrainConfig, exec: Execution) -> Result<BundleManifest> {
    cfg.validate()?;
    let scenario = ChannelScenario::from_config(&cfg.scenario, &cfg.zc)?;
    let spatial = train_stage(cfg, &scenario, SliceKind::Spatial, exec)?;
    let temporal = if cfg.temporal {
        Some(train_stage(cfg, &scenario, SliceKind::Temporal, exec)?)
    } else {
        None
    };
    let stages = HyneStages {
        spatial: HyneStage::new(spatial.model.clone(), spatial.hyne)?,
        temporal: match &temporal {
            Some(t) => Some(HyneStage::new(t.model.clone(), t.hyne)?),
            None => None,
        },
    };
    let pipeline = HynePipeline::calibrate(
        generate_root(&cfg.zc)?,
        shift_table(&cfg.zc)?,
        stages,
        &scenario,
        cfg.target_pfa,
        cfg.calibration_trials,
        derive_seed(cfg.seed, &[label::CALIBRATION]),
        exec,
    )?;

    let mut contents: Vec<(String, String)> = vec![("spatial.json".into(), spatial.to_json()?)];
    if let Some(t) = &temporal {
        contents.push(("temporal.json".into(), t.to_json()?));
    }
    contents.push((
        "threshold.json".into(),
        serde_json::to_string_pretty(pipeline.threshold())?,
    ));
    persist(&cfg.bundle_dir, &cfg.bundle_id, &contents, cfg)
}

fn persist(dir: &Path, id: &str, contents: &[(String, String)], train_config: &TrainConfig) -> Result<BundleManifest> {
    let path = bundle_path(dir, id);
    std::fs::create_dir_all(&path)?;
    let mut files = Vec::new();
    for (name, text) in contents {
        std::fs::write(path.join(name), text)?;
        files.push(BundleFile {
            name: name.clone(),
            sha256: hex_digest(text.as_bytes()),
        });
    }
    let mut stored = train_config.clone();
    stored.bundle_dir = PathBuf::from(".");
    stored.bundle_id = id.to_string();
    let manifest = BundleManifest {
        format: BUNDLE_FORMAT.into(),
        id: id.to_string(),
        root: train_config.zc.root,
        scenario_hash: scenario_hash(&train_config.scenario, &train_config.zc),
        train_config: stored,
        bundle_hash: bundle_hash(&files),
        files,
    };
    std::fs::write(path.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Loads and integrity-checks a bundle. A missing bundle is a configuration error.
pub fn load_bundle(dir: &Path, id: &str) -> Result<Bundle> {
    if !valid_bundle_id(id) {
        return Err(Error::config(format!("invalid bundle id {id:?}")));
    }
    let path = bundle_path(dir, id);
    let manifest_path = path.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| Error::config(format!("bundle {id:?} not found at {}: {e}", path.display())))?;
    let manifest: BundleManifest = serde_json::from_str(&text)?;
    if manifest.format != BUNDLE_FORMAT {
        return Err(Error::config(format!("{} is not a bundle manifest", manifest_path.display())));
    }
    let mut spatial = None;
    let mut temporal = None;
    let mut threshold = None;
    for f in &manifest.files {
        let body = std::fs::read_to_string(path.join(&f.name))?;
        if hex_digest(body.as_bytes()) != f.sha256 {
            return Err(Error::config(format!("bundle {id:?}: {} fails its checksum", f.name)));
        }
        match f.name.as_str() {
            "spatial.json" => spatial = Some(ModelFile::from_json(&body)?),
            "temporal.json" => temporal = Some(ModelFile::from_json(&body)?),
            "threshold.json" => threshold = Some(serde_json::from_str::<Threshold>(&body)?),
            other => return Err(Error::config(format!("bundle {id:?}: unexpected file {other}"))),
        }
    }
    let spatial = spatial.ok_or_else(|| Error::config(format!("bundle {id:?} has no spatial model")))?;
    let threshold = threshold.ok_or_else(|| Error::config(format!("bundle {id:?} has no threshold")))?;
    if bundle_hash(&manifest.files) != manifest.bundle_hash {
        return Err(Error::config(format!("bundle {id:?} hash mismatch")));
    }
    Ok(Bundle {
        stages: HyneStages {
            spatial: HyneStage::new(spatial.model, spatial.hyne)?,
            temporal: match temporal {
                Some(t) => Some(HyneStage::new(t.model, t.hyne)?),
                None => None,
            },
        },
        threshold,
        manifest,
    })
}

/// Writes a bundle around already-built stages (no training involved).
pub fn write_bundle(
    dir: &Path,
    id: &str,
    stages: &HyneStages,
    threshold: &Threshold,
    train_config: &TrainConfig,
) -> Result<BundleManifest> {
    if !valid_bundle_id(id) {
        return Err(Error::config(format!("invalid bundle id {id:?}")));
    }
    let mut contents = vec![(
        "spatial.json".to_string(),
        ModelFile::new(stages.spatial.model.clone(), stages.spatial.config).to_json()?,
    )];
    if let Some(t) = &stages.temporal {
        contents.push(("temporal.json".into(), ModelFile::new(t.model.clone(), t.config).to_json()?));
    }
    contents.push(("threshold.json".into(), serde_json::to_string_pretty(threshold)?));
    persist(dir, id, &contents, train_config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::OptimizerConfig;

    fn small(dir: &Path) -> TrainConfig {
        TrainConfig {
            bundle_id: "tiny".into(),
            bundle_dir: dir.to_path_buf(),
            num_samples: 500,
            optimizer: OptimizerConfig {
                epochs: 2,
                ..OptimizerConfig::default()
            },
            hidden: Some([16, 16]),
            target_pfa: 0.01,
            calibration_trials: 1000,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn same_seed_same_hash() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = train_command(&small(a.path()), Execution::Parallel).unwrap();
        let mb = train_command(&small(b.path()), Execution::Sequential).unwrap();
        assert_eq!(ma.bundle_hash, mb.bundle_hash);
        let loaded = load_bundle(a.path(), "tiny").unwrap();
        assert_eq!(loaded.manifest, ma);
        let mut other = small(b.path());
        other.seed = 2;
        assert_ne!(train_command(&other, Execution::Parallel).unwrap().bundle_hash, ma.bundle_hash);
    }

    #[test]
    fn missing_or_tampered_bundles_are_config_errors() {
        let a = tempfile::tempdir().unwrap();
        assert!(matches!(load_bundle(a.path(), "nope"), Err(Error::Config(_))));
        train_command(&small(a.path()), Execution::Parallel).unwrap();
        let p = a.path().join("tiny").join("threshold.json");
        let text = std::fs::read_to_string(&p).unwrap().replace("\"gamma\"", "\"gamma\" ");
        std::fs::write(&p, text).unwrap();
        assert!(matches!(load_bundle(a.path(), "tiny"), Err(Error::Config(_))));
    }

    #[test]
    fn zero_samples_is_config_error() {
        let a = tempfile::tempdir().unwrap();
        let mut cfg = small(a.path());
        cfg.num_samples = 0;
        assert!(matches!(train_command(&cfg, Execution::Parallel), Err(Error::Config(_))));
    }
}
