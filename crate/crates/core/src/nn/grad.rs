use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::nn::forward::{forward, layer_backward, ActivationTrace};
use crate::nn::model::ModelSpec;

const GRAD_CHUNK: usize = 8;

/// Per-parameter partial derivatives, shaped like the model's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn zeros_like(model: &ModelSpec) -> Self {
        GradientSet {
            weights: model.layers.iter().map(|l| vec![0.0; l.weight.len()]).collect(),
            biases: model.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.iter_mut().for_each(|g| *g *= s);
        }
    }

    /// Weight gradients concatenated in global parameter-id order.
    pub fn flat_weights(&self) -> Vec<f64> {
        self.weights.iter().flatten().copied().collect()
    }

    pub fn add(&mut self, other: &GradientSet) {
        let dst = self.weights.iter_mut().chain(self.biases.iter_mut());
        let src = other.weights.iter().chain(&other.biases);
        for (a, b) in dst.zip(src) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).flatten().all(|g| g.is_finite())
    }
}

/// Backpropagates `output_grad = dL/d(output logits)` through a recorded
/// trace, accumulating into `grads`.
pub fn backward(model: &ModelSpec, trace: &ActivationTrace, output_grad: &[f64], grads: &mut GradientSet) {
    let kinds = model.neuron_kinds();
    let mut delta = output_grad.to_vec();
    for k in (0..model.layers.len()).rev() {
        let layer = &model.layers[k];
        let input = &trace.activations[k];
        if k == 0 {
            layer_backward(
                &layer.kind,
                &layer.weight,
                input,
                &delta,
                &mut grads.weights[k],
                &mut grads.biases[k],
                None,
            );
            break;
        }
        let mut d_in = vec![0.0; input.len()];
        layer_backward(
            &layer.kind,
            &layer.weight,
            input,
            &delta,
            &mut grads.weights[k],
            &mut grads.biases[k],
            Some(&mut d_in),
        );
        let prev_kind = kinds[k];
        let prev_logits = &trace.logits[k - 1];
        for (d, &z) in d_in.iter_mut().zip(prev_logits) {
            *d *= prev_kind.derivative(z);
        }
        delta = d_in;
    }
}

/// Softmax cross-entropy of one example and its gradient w.r.t. the logits.
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + max - logits[label];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

/// Mean cross-entropy over `batch` and its gradient w.r.t. every parameter.
pub fn grad_loss(model: &ModelSpec, batch: &Dataset) -> Result<(f64, GradientSet)> {
    if batch.is_empty() {
        return invalid("gradient of an empty batch");
    }
    if batch.classes > model.output_dims || batch.labels.iter().any(|&l| l >= model.output_dims) {
        return invalid("label outside the model's output range");
    }
    // Fixed-size chunks summed in order keep the result independent of the
    // thread count.
    let idx: Vec<usize> = (0..batch.len()).collect();
    let parts: Vec<Result<(f64, GradientSet)>> = idx
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = GradientSet::zeros_like(model);
            let mut total = 0.0;
            for &i in chunk {
                let (out, trace) = forward(model, &batch.inputs[i])?;
                let (loss, d) = cross_entropy(&out, batch.labels[i]);
                total += loss;
                backward(model, &trace, &d, &mut g);
            }
            Ok((total, g))
        })
        .collect();
    let mut grads = GradientSet::zeros_like(model);
    let mut total = 0.0;
    for part in parts {
        let (t, g) = part?;
        total += t;
        grads.add(&g);
    }
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    Ok((total / n, grads))
}

/// Mean cross-entropy without gradients.
pub fn mean_loss(model: &ModelSpec, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return invalid("loss of an empty dataset");
    }
    let mut total = 0.0;
    for (x, &y) in data.inputs.iter().zip(&data.labels) {
        let (out, _) = forward(model, x)?;
        total += cross_entropy(&out, y).0;
    }
    Ok(total / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::{Activation, LayerKind, LayerSpec};

    #[test]
    fn uniform_softmax_loss_is_ln_p() {
        let m = ModelSpec {
            layers: vec![LayerSpec::zeros(LayerKind::Dense { inputs: 3, outputs: 5 })],
            activation: Activation::Relu,
            input_dims: 3,
            output_dims: 5,
            seed: 0,
        };
        let batch = Dataset::new(vec![vec![0.2, -1.0, 3.0], vec![1.0, 1.0, 1.0]], vec![1, 4], 5).unwrap();
        let (loss, _) = grad_loss(&m, &batch).unwrap();
        assert_eq!(loss, 5f64.ln());
    }

    #[test]
    fn output_bias_gradient_is_mean_softmax_minus_onehot() {
        // Two classes, two examples; compare with the closed form directly.
        let mut m = ModelSpec::mlp(&[2, 3, 2], Activation::Tanh, 4).unwrap();
        m.layers[1].bias = vec![0.3, -0.2];
        let batch = Dataset::new(vec![vec![0.5, -0.5], vec![-1.0, 2.0]], vec![0, 1], 2).unwrap();
        let (_, g) = grad_loss(&m, &batch).unwrap();
        let mut want = [0.0; 2];
        for (x, &y) in batch.inputs.iter().zip(&batch.labels) {
            let (out, _) = forward(&m, x).unwrap();
            let p0 = 1.0 / (1.0 + (out[1] - out[0]).exp());
            let p = [p0, 1.0 - p0];
            for c in 0..2 {
                want[c] += (p[c] - if c == y { 1.0 } else { 0.0 }) / 2.0;
            }
        }
        for c in 0..2 {
            assert!((g.biases[1][c] - want[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_batch_rejected() {
        let m = ModelSpec::mlp(&[2, 2], Activation::Relu, 0).unwrap();
        assert!(grad_loss(&m, &Dataset::default()).is_err());
    }
}
