//! Three dense layers with ReLU between them and a linear output.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;

/// Affine layer `z = W x + b`, `W` row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    #[inline]
    fn affine(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs).zip(&self.biases))
        {
            *o = b + dot(row, x);
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// How a complex slice is scaled before it enters the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputScaling {
    /// Raw real/imaginary stacking.
    None,
    /// Divide by `sqrt(noise_variance + mean |y|^2)` and undo on the output.
    #[default]
    SlicePower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    layers: Vec<DenseLayer>,
    #[serde(default)]
    input_scaling: InputScaling,
}

/// Reusable activation buffers for [`MlpModel::forward_with`].
#[derive(Debug, Clone, Default)]
pub struct ForwardScratch {
    acts: Vec<Vec<f64>>,
}

impl MlpModel {
    pub fn from_layers(layers: Vec<DenseLayer>, input_scaling: InputScaling) -> Result<Self> {
        if layers.len() != 3 {
            return Err(Error::input(format!(
                "expected three dense layers, got {}",
                layers.len()
            )));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(Error::input(format!("layer {i} has inconsistent parameter sizes")));
            }
            if i > 0 && layers[i - 1].outputs != l.inputs {
                return Err(Error::input(format!(
                    "layer {i} expects {} inputs but the previous layer emits {}",
                    l.inputs,
                    layers[i - 1].outputs
                )));
            }
        }
        Ok(Self {
            layers,
            input_scaling,
        })
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        let layers = (0..3).map(|i| DenseLayer::zeros(dims[i], dims[i + 1])).collect();
        Self {
            layers,
            input_scaling: InputScaling::default(),
        }
    }

    /// He-normal weights, zero biases.
    pub fn initialized<R: Rng + ?Sized>(dims: [usize; 4], rng: &mut R) -> Self {
        let mut model = Self::zeros(dims);
        for layer in &mut model.layers {
            let std = (2.0 / layer.inputs as f64).sqrt();
            for w in &mut layer.weights {
                let g: f64 = rng.sample(StandardNormal);
                *w = g * std;
            }
        }
        model
    }

    /// Default sizing `[2n, 8n, 8n, 2n]` for complex slices of length `n`.
    pub fn default_dims(slice_len: usize) -> [usize; 4] {
        [2 * slice_len, 8 * slice_len, 8 * slice_len, 2 * slice_len]
    }

    pub fn with_input_scaling(mut self, scaling: InputScaling) -> Self {
        self.input_scaling = scaling;
        self
    }

    pub fn input_scaling(&self) -> InputScaling {
        self.input_scaling
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn layer_dims(&self) -> [usize; 4] {
        [
            self.layers[0].inputs,
            self.layers[0].outputs,
            self.layers[1].outputs,
            self.layers[2].outputs,
        ]
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[2].outputs
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::input("parameter vector has the wrong length"));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let (w, b) = (l.weights.len(), l.biases.len());
            l.weights.copy_from_slice(&flat[offset..offset + w]);
            offset += w;
            l.biases.copy_from_slice(&flat[offset..offset + b]);
            offset += b;
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::input(format!(
                "input has {} entries, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut scratch = ForwardScratch::default();
        Ok(self.forward_with(x, &mut scratch).to_vec())
    }

    /// Forward pass into reusable buffers. Panics on a dimension mismatch.
    pub fn forward_with<'s>(&self, x: &[f64], scratch: &'s mut ForwardScratch) -> &'s [f64] {
        assert_eq!(x.len(), self.input_dim(), "input dimension mismatch");
        scratch.acts.resize(self.layers.len(), Vec::new());
        for (i, layer) in self.layers.iter().enumerate() {
            let (done, rest) = scratch.acts.split_at_mut(i);
            let input: &[f64] = if i == 0 { x } else { &done[i - 1] };
            let out = &mut rest[0];
            out.resize(layer.outputs, 0.0);
            layer.affine(input, out);
            if i + 1 < self.layers.len() {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        &scratch.acts[self.layers.len() - 1]
    }
}

impl MlpModel {
    /// Forward pass over the rows of `x` (one sample per row).
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::input(format!(
                "batch has {} columns, model expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let n = self.layers.len();
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let w = ArrayView2::from_shape((layer.outputs, layer.inputs), &layer.weights)
                .expect("layer sizes are validated");
            let mut z = h.dot(&w.t());
            let b = ArrayView1::from(&layer.biases);
            z += &b;
            if i + 1 < n {
                z.mapv_inplace(|v| v.max(0.0));
            }
            h = z;
        }
        Ok(h)
    }
}

/// Gradients with the same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: model.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

/// Rows are concatenated samples: `inputs` is `K x d_in`, `labels` is `K x d_out`.
#[derive(Debug, Clone, Copy)]
pub struct SampleBatch<'a> {
    pub inputs: &'a [f64],
    pub labels: &'a [f64],
}

/// Rows per gradient shard. Fixed so that the reduction order, and hence
/// the result, does not depend on the worker count.
pub const SHARD_ROWS: usize = 64;

/// Mean squared error over all output coordinates and its gradient.
pub fn mse_loss_and_gradient(model: &MlpModel, batch: SampleBatch<'_>) -> Result<(f64, Gradients)> {
    mse_loss_and_gradient_with(model, batch, Execution::Sequential)
}

pub fn mse_loss_and_gradient_with(
    model: &MlpModel,
    batch: SampleBatch<'_>,
    exec: Execution,
) -> Result<(f64, Gradients)> {
    let (din, dout) = (model.input_dim(), model.output_dim());
    if batch.inputs.is_empty() || batch.inputs.len() % din != 0 {
        return Err(Error::input("batch inputs must be a nonempty multiple of the input dimension"));
    }
    let k = batch.inputs.len() / din;
    if batch.labels.len() != k * dout {
        return Err(Error::input("labels do not line up with inputs"));
    }
    let scale = 1.0 / (k * dout) as f64;
    let shards = k.div_ceil(SHARD_ROWS);
    let parts = exec.map(shards, |i| {
        let lo = i * SHARD_ROWS;
        let hi = (lo + SHARD_ROWS).min(k);
        let mut grads = Gradients::zeros_like(model);
        let mut ws = Backprop::new(model);
        let mut sq = 0.0;
        for r in lo..hi {
            sq += ws.accumulate(
                model,
                &batch.inputs[r * din..(r + 1) * din],
                &batch.labels[r * dout..(r + 1) * dout],
                scale,
                &mut grads,
            );
        }
        (sq, grads)
    });
    let mut total = Gradients::zeros_like(model);
    let mut sq = 0.0;
    for (s, g) in &parts {
        sq += s;
        total.add_assign(g);
    }
    Ok((sq * scale, total))
}

struct Backprop {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl Backprop {
    fn new(model: &MlpModel) -> Self {
        let sizes: Vec<usize> = model.layers.iter().map(|l| l.outputs).collect();
        Self {
            pre: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            post: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            delta: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Adds `scale * d(sum sq err)/d(params)` to `grads`; returns the squared error.
    fn accumulate(&mut self, model: &MlpModel, x: &[f64], y: &[f64], scale: f64, grads: &mut Gradients) -> f64 {
        let n = model.layers.len();
        for i in 0..n {
            let layer = &model.layers[i];
            let (before, after) = self.post.split_at_mut(i);
            let input: &[f64] = if i == 0 { x } else { &before[i - 1] };
            layer.affine(input, &mut self.pre[i]);
            let last = i + 1 == n;
            for (p, z) in after[0].iter_mut().zip(&self.pre[i]) {
                *p = if last { *z } else { z.max(0.0) };
            }
        }
        let mut sq = 0.0;
        for ((d, o), t) in self.delta[n - 1].iter_mut().zip(&self.post[n - 1]).zip(y) {
            let e = o - t;
            sq += e * e;
            *d = 2.0 * scale * e;
        }
        for i in (0..n).rev() {
            let layer = &model.layers[i];
            let input: &[f64] = if i == 0 { x } else { &self.post[i - 1] };
            let delta = &self.delta[i];
            let gw = &mut grads.weights[i];
            for (row, &d) in gw.chunks_exact_mut(layer.inputs).zip(delta) {
                if d != 0.0 {
                    row.iter_mut().zip(input).for_each(|(g, a)| *g += d * a);
                }
            }
            grads.biases[i].iter_mut().zip(delta).for_each(|(g, d)| *g += d);
            if i > 0 {
                let (lower, upper) = self.delta.split_at_mut(i);
                let prev = &mut lower[i - 1];
                prev.iter_mut().for_each(|v| *v = 0.0);
                for (row, &d) in layer.weights.chunks_exact(layer.inputs).zip(&upper[0]) {
                    if d != 0.0 {
                        prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
                    }
                }
                for (p, z) in prev.iter_mut().zip(&self.pre[i - 1]) {
                    if *z <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
        }
        sq
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    /// Straight-line reimplementation used as an independent forward oracle.
    fn reference_forward(model: &MlpModel, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for (i, l) in model.layers().iter().enumerate() {
            let mut next = Vec::with_capacity(l.outputs);
            for o in 0..l.outputs {
                let mut acc = l.biases[o];
                for j in 0..l.inputs {
                    acc += l.weights[o * l.inputs + j] * h[j];
                }
                next.push(if i < 2 && acc < 0.0 { 0.0 } else { acc });
            }
            h = next;
        }
        h
    }

    #[test]
    fn zero_model_outputs_zero() {
        let m = MlpModel::zeros([4, 8, 8, 4]);
        assert_eq!(m.forward(&[1.0, -2.0, 3.0, 4.0]).unwrap(), vec![0.0; 4]);
        assert!(m.forward(&[1.0]).is_err());
    }

    #[test]
    fn identity_path_passes_positive_input() {
        let mut m = MlpModel::zeros([3, 3, 3, 3]);
        for l in m.layers_mut() {
            for i in 0..3 {
                l.weights[i * 3 + i] = 1.0;
            }
        }
        assert_eq!(m.forward(&[0.5, 1.5, 2.0]).unwrap(), vec![0.5, 1.5, 2.0]);
    }

    #[test]
    fn forward_matches_reference() {
        let mut rng = stream(1, &[]);
        for _ in 0..20 {
            let m = MlpModel::initialized([6, 10, 7, 4], &mut rng);
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            let a = m.forward(&x).unwrap();
            let b = reference_forward(&m, &x);
            for (p, q) in a.iter().zip(&b) {
                assert!((p - q).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn perfect_fit_has_zero_loss_and_gradient() {
        let mut rng = stream(2, &[]);
        let m = MlpModel::initialized([4, 8, 8, 4], &mut rng);
        let inputs: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels: Vec<f64> = inputs.chunks(4).flat_map(|x| m.forward(x).unwrap()).collect();
        let (loss, g) = mse_loss_and_gradient(&m, SampleBatch { inputs: &inputs, labels: &labels }).unwrap();
        assert!(loss < 1e-28);
        assert!(g.flat().iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn duplicated_batch_is_invariant() {
        let mut rng = stream(3, &[]);
        let m = MlpModel::initialized([4, 8, 8, 4], &mut rng);
        let inputs: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (l1, g1) = mse_loss_and_gradient(&m, SampleBatch { inputs: &inputs, labels: &labels }).unwrap();
        let inputs2 = [inputs.clone(), inputs.clone()].concat();
        let labels2 = [labels.clone(), labels.clone()].concat();
        let (l2, g2) = mse_loss_and_gradient(&m, SampleBatch { inputs: &inputs2, labels: &labels2 }).unwrap();
        assert!((l1 - l2).abs() < 1e-14);
        for (a, b) in g1.flat().iter().zip(g2.flat()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn sharded_gradient_matches_sequential() {
        let mut rng = stream(4, &[]);
        let m = MlpModel::initialized([4, 8, 8, 4], &mut rng);
        let inputs: Vec<f64> = (0..4 * 300).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels: Vec<f64> = (0..4 * 300).map(|_| rng.random_range(-1.0..1.0)).collect();
        let batch = SampleBatch { inputs: &inputs, labels: &labels };
        let a = mse_loss_and_gradient_with(&m, batch, Execution::Sequential).unwrap();
        let b = mse_loss_and_gradient_with(&m, batch, Execution::Parallel).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = stream(6, &[]);
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let m = MlpModel::initialized([4, 8, 8, 4], &mut rng);
            let inputs: Vec<f64> = (0..4 * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let labels: Vec<f64> = (0..4 * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let batch = SampleBatch { inputs: &inputs, labels: &labels };
            let g = mse_loss_and_gradient(&m, batch).unwrap().1.flat();
            let p = m.params();
            let eps = 1e-5;
            let mut probe = m.clone();
            for i in 0..p.len() {
                let mut q = p.clone();
                q[i] = p[i] + eps;
                probe.set_params(&q).unwrap();
                let up = mse_loss_and_gradient(&probe, batch).unwrap().0;
                q[i] = p[i] - eps;
                probe.set_params(&q).unwrap();
                let down = mse_loss_and_gradient(&probe, batch).unwrap().0;
                let fd = (up - down) / (2.0 * eps);
                let rel = (fd - g[i]).abs() / g[i].abs().max(fd.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
        assert!(worst <= 1e-4, "worst relative deviation {worst}");
    }

    #[test]
    fn batch_forward_matches_rows() {
        let mut rng = stream(7, &[]);
        let m = MlpModel::initialized([6, 12, 12, 6], &mut rng);
        let x = Array2::from_shape_fn((9, 6), |_| rng.random_range(-1.0..1.0));
        let out = m.forward_batch(x.view()).unwrap();
        for (r, row) in x.rows().into_iter().enumerate() {
            let single = m.forward(row.as_slice().unwrap()).unwrap();
            for (a, b) in single.iter().zip(out.row(r)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert!(m.forward_batch(Array2::zeros((2, 5)).view()).is_err());
    }

    #[test]
    fn params_round_trip() {
        let mut rng = stream(5, &[]);
        let m = MlpModel::initialized([2, 3, 3, 2], &mut rng);
        let mut z = MlpModel::zeros([2, 3, 3, 2]);
        z.set_params(&m.params()).unwrap();
        assert_eq!(z.params(), m.params());
        assert!(MlpModel::from_layers(vec![DenseLayer::zeros(2, 3)], InputScaling::None).is_err());
    }
}
