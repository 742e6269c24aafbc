//! Dense denoiser for channel slices and the HyNE bypass blend around it.
//!
//! Complex slices enter the network as `[re..., im...]`. With
//! [`InputScaling::SlicePower`] each slice is divided by
//! `sqrt(noise_variance + mean |y|^2)` on the way in and multiplied back on
//! the way out.

mod dataset;
mod hyne;
mod mlp;
mod persist;
mod train;

pub use dataset::{build_training_set, DatasetOptions, SampleOrigin, SliceKind, TrainingMetadata, TrainingSet};
pub use hyne::{
    alpha_from_snr, blend_with_alpha, denoise, denoise_with, fit_alpha, hyne_apply, measured_snr,
    AlphaMode, HyneConfig,
};
pub use mlp::{
    mse_loss_and_gradient, mse_loss_and_gradient_with, DenseLayer, ForwardScratch, Gradients,
    InputScaling, MlpModel, SampleBatch, SHARD_ROWS,
};
pub use persist::{ModelFile, MODEL_FORMAT, MODEL_FORMAT_VERSION};
pub use train::{evaluate_mse, identity_mse, train, OptimizerConfig, TrainingOutcome};

use num_complex::Complex64;

/// `[re(v_0), ..., re(v_{n-1}), im(v_0), ..., im(v_{n-1})]`.
pub fn complex_to_real(v: &[Complex64]) -> Vec<f64> {
    let mut out = vec![0.0; 2 * v.len()];
    complex_to_real_into(v, &mut out);
    out
}

pub(crate) fn complex_to_real_into(v: &[Complex64], out: &mut [f64]) {
    let n = v.len();
    for (i, c) in v.iter().enumerate() {
        out[i] = c.re;
        out[n + i] = c.im;
    }
}

/// Inverse of [`complex_to_real`]. Panics on odd length.
pub fn real_to_complex(x: &[f64]) -> Vec<Complex64> {
    assert!(x.len() % 2 == 0, "stacked vector must have even length");
    let n = x.len() / 2;
    (0..n).map(|i| Complex64::new(x[i], x[n + i])).collect()
}
