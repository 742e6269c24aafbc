//! The HyNE layer: `(1 - alpha) y + alpha nn(y)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::mlp::{ForwardScratch, InputScaling, MlpModel};
use super::{complex_to_real_into, TrainingSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    /// Use the stored `alpha` as is.
    Fixed,
    /// `alpha = 1 / (1 + rho)` from the measured SNR of the input.
    #[default]
    SnrDerived,
    /// Stored `alpha` was fitted on training data through a sigmoid logit.
    Trainable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyneConfig {
    /// Blend weight in `[0, 1]`; ignored in [`AlphaMode::SnrDerived`].
    pub alpha: f64,
    pub mode: AlphaMode,
}

impl Default for HyneConfig {
    fn default() -> Self {
        Self::snr_derived()
    }
}

impl HyneConfig {
    pub fn fixed(alpha: f64) -> Result<Self> {
        let cfg = Self {
            alpha,
            mode: AlphaMode::Fixed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn snr_derived() -> Self {
        Self {
            alpha: 1.0,
            mode: AlphaMode::SnrDerived,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        Ok(())
    }

    /// Blend weight for an input whose measured linear SNR is `rho`.
    pub fn resolve(&self, rho: f64) -> f64 {
        match self.mode {
            AlphaMode::Fixed | AlphaMode::Trainable => self.alpha,
            AlphaMode::SnrDerived => 1.0 / (1.0 + rho.max(0.0)),
        }
    }
}

pub fn alpha_from_snr(rho: f64) -> Result<f64> {
    if !(rho >= 0.0) {
        return Err(Error::input(format!("SNR must be non-negative, got {rho}")));
    }
    Ok(1.0 / (1.0 + rho))
}

/// `max(0, mean |y|^2 / noise_variance - 1)`; infinite without noise.
pub fn measured_snr<'a, I>(values: I, noise_variance: f64) -> f64
where
    I: IntoIterator<Item = &'a Complex64>,
{
    let (mut power, mut n) = (0.0, 0usize);
    for v in values {
        power += v.norm_sqr();
        n += 1;
    }
    if n == 0 {
        return 0.0;
    }
    if noise_variance <= 0.0 {
        return f64::INFINITY;
    }
    (power / n as f64 / noise_variance - 1.0).max(0.0)
}

pub(crate) fn input_scale(y: &[Complex64], scaling: InputScaling, noise_variance: f64) -> f64 {
    match scaling {
        InputScaling::None => 1.0,
        InputScaling::SlicePower => {
            let power = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / y.len().max(1) as f64;
            let denom = (noise_variance.max(0.0) + power).sqrt();
            if denom > 0.0 && denom.is_finite() {
                1.0 / denom
            } else {
                1.0
            }
        }
    }
}

fn check_dims(model: &MlpModel, n: usize) -> Result<()> {
    if model.input_dim() != 2 * n || model.output_dim() != 2 * n {
        return Err(Error::config(format!(
            "model dims {:?} do not fit a slice of length {n}",
            model.layer_dims()
        )));
    }
    Ok(())
}

/// Network estimate `nn(y)` including input scaling.
pub fn denoise(model: &MlpModel, y: &[Complex64], noise_variance: f64) -> Result<Vec<Complex64>> {
    check_dims(model, y.len())?;
    let mut out = vec![Complex64::new(0.0, 0.0); y.len()];
    let mut buf = vec![0.0; 2 * y.len()];
    denoise_with(model, y, noise_variance, &mut ForwardScratch::default(), &mut buf, &mut out);
    Ok(out)
}

/// Allocation-free [`denoise`]; dimensions must already be checked.
pub fn denoise_with(
    model: &MlpModel,
    y: &[Complex64],
    noise_variance: f64,
    scratch: &mut ForwardScratch,
    buf: &mut [f64],
    out: &mut [Complex64],
) {
    let n = y.len();
    let scale = input_scale(y, model.input_scaling(), noise_variance);
    complex_to_real_into(y, buf);
    if scale != 1.0 {
        buf.iter_mut().for_each(|v| *v *= scale);
    }
    let o = model.forward_with(buf, scratch);
    let inv = 1.0 / scale;
    for (i, c) in out.iter_mut().enumerate() {
        *c = Complex64::new(o[i] * inv, o[n + i] * inv);
    }
}

/// `(1 - alpha) y + alpha nn(y)`. The endpoints are exact: `alpha = 0`
/// returns `y` without running the network and `alpha = 1` returns `nn(y)`.
pub fn blend_with_alpha(
    y: &[Complex64],
    model: &MlpModel,
    alpha: f64,
    noise_variance: f64,
) -> Result<Vec<Complex64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::input(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(y.to_vec());
    }
    let mut nn = denoise(model, y, noise_variance)?;
    if alpha < 1.0 {
        for (o, v) in nn.iter_mut().zip(y) {
            *o = v * (1.0 - alpha) + *o * alpha;
        }
    }
    Ok(nn)
}

/// HyNE layer on one slice, with `alpha` resolved from the slice itself.
pub fn hyne_apply(
    y: &[Complex64],
    model: &MlpModel,
    cfg: &HyneConfig,
    noise_variance: f64,
) -> Result<Vec<Complex64>> {
    cfg.validate()?;
    let alpha = cfg.resolve(measured_snr(y, noise_variance));
    blend_with_alpha(y, model, alpha, noise_variance)
}

/// Fits a single blend weight on `data` by gradient descent on its logit.
///
/// The blended squared error is quadratic in `alpha`, so the sums it needs
/// are accumulated once; the descent then runs on two scalars.
pub fn fit_alpha(model: &MlpModel, data: &TrainingSet, steps: usize, learning_rate: f64) -> Result<HyneConfig> {
    if data.is_empty() {
        return Err(Error::config("cannot fit alpha on an empty training set"));
    }
    if model.input_dim() != data.dim || model.output_dim() != data.dim {
        return Err(Error::config("model does not match training set dimension"));
    }
    let mut scratch = ForwardScratch::default();
    let (mut a, mut b) = (0.0, 0.0);
    for k in 0..data.len() {
        let (x, l) = (data.input(k), data.label(k));
        let o = model.forward_with(x, &mut scratch);
        for ((oi, xi), li) in o.iter().zip(x).zip(l) {
            let d = oi - xi;
            a += d * d;
            b += d * (li - xi);
        }
    }
    let (a, b) = (a / data.len() as f64, b / data.len() as f64);
    let mut logit = 0.0f64;
    for _ in 0..steps {
        let alpha = sigmoid(logit);
        let grad = (2.0 * a * alpha - 2.0 * b) * alpha * (1.0 - alpha);
        logit -= learning_rate * grad;
    }
    let alpha = sigmoid(logit);
    if !alpha.is_finite() {
        return Err(Error::numeric("alpha fit diverged"));
    }
    Ok(HyneConfig {
        alpha,
        mode: AlphaMode::Trainable,
    })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
