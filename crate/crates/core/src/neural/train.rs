//! Mini-batch Adam on the mean squared error.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::TrainingSet;
use super::mlp::{mse_loss_and_gradient_with, ForwardScratch, MlpModel, SampleBatch};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::rng::{label, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 256,
            epochs: 20,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.batch_size > 0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    pub model: MlpModel,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
}

/// Trains `model` in place of a copy. Epoch `e` shuffles with stream
/// `(seed, e)`; batch gradients are reduced over fixed shards, so the
/// result is bit-identical for any worker count.
pub fn train(
    model: &MlpModel,
    data: &TrainingSet,
    opt: &OptimizerConfig,
    seed: u64,
    exec: Execution,
) -> Result<TrainingOutcome> {
    opt.validate()?;
    if data.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    if model.input_dim() != data.dim || model.output_dim() != data.dim {
        return Err(Error::config(format!(
            "model dims {:?} do not match training rows of width {}",
            model.layer_dims(),
            data.dim
        )));
    }
    let mut model = model.clone();
    let mut params = model.params();
    let mut m1 = vec![0.0; params.len()];
    let mut m2 = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut xb = Vec::with_capacity(opt.batch_size * data.dim);
    let mut yb = Vec::with_capacity(opt.batch_size * data.dim);
    let mut history = Vec::with_capacity(opt.epochs);
    let mut step = 0usize;
    for epoch in 0..opt.epochs {
        let mut rng = stream(seed, &[label::TRAINING, epoch as u64]);
        order.shuffle(&mut rng);
        let (mut total, mut rows) = (0.0, 0usize);
        for (b, chunk) in order.chunks(opt.batch_size).enumerate() {
            xb.clear();
            yb.clear();
            for &k in chunk {
                xb.extend_from_slice(data.input(k));
                yb.extend_from_slice(data.label(k));
            }
            let (loss, grads) = mse_loss_and_gradient_with(
                &model,
                SampleBatch {
                    inputs: &xb,
                    labels: &yb,
                },
                exec,
            )?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    step: b,
                    detail: format!("loss became {loss}"),
                });
            }
            step += 1;
            let g = grads.flat();
            let c1 = 1.0 - opt.beta1.powi(step as i32);
            let c2 = 1.0 - opt.beta2.powi(step as i32);
            for i in 0..params.len() {
                m1[i] = opt.beta1 * m1[i] + (1.0 - opt.beta1) * g[i];
                m2[i] = opt.beta2 * m2[i] + (1.0 - opt.beta2) * g[i] * g[i];
                params[i] -= opt.learning_rate * (m1[i] / c1) / ((m2[i] / c2).sqrt() + opt.epsilon);
            }
            model.set_params(&params)?;
            if !model.is_finite() {
                return Err(Error::Training {
                    epoch,
                    step: b,
                    detail: "non-finite parameters after update".into(),
                });
            }
            total += loss * chunk.len() as f64;
            rows += chunk.len();
        }
        history.push(total / rows.max(1) as f64);
    }
    Ok(TrainingOutcome {
        model,
        loss_history: history,
    })
}

/// Mean squared error per complex entry, in channel units, of the network
/// estimate on `data`.
pub fn evaluate_mse(model: &MlpModel, data: &TrainingSet) -> Result<f64> {
    if model.input_dim() != data.dim || model.output_dim() != data.dim {
        return Err(Error::config("model does not match data"));
    }
    let mut scratch = ForwardScratch::default();
    let mut acc = 0.0;
    for k in 0..data.len() {
        let o = model.forward_with(data.input(k), &mut scratch);
        let sq: f64 = o.iter().zip(data.label(k)).map(|(a, b)| (a - b) * (a - b)).sum();
        acc += sq / (data.scales[k] * data.scales[k]);
    }
    Ok(acc / (data.len() * data.dim / 2).max(1) as f64)
}

/// Same as [`evaluate_mse`] for the raw input used as its own estimate.
pub fn identity_mse(data: &TrainingSet) -> f64 {
    let mut acc = 0.0;
    for k in 0..data.len() {
        let sq: f64 = data
            .input(k)
            .iter()
            .zip(data.label(k))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        acc += sq / (data.scales[k] * data.scales[k]);
    }
    acc / (data.len() * data.dim / 2).max(1) as f64
}
