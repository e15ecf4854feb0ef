use crate::error::{invalid, Error, Result};
use crate::nn::model::{LayerKind, ModelSpec, NeuronKind};

/// Logits and activations of every neuron for one input.
///
/// `activations[0]` is the input itself; `logits[k]` and `activations[k + 1]`
/// belong to the output of model layer `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationTrace {
    pub logits: Vec<Vec<f64>>,
    pub activations: Vec<Vec<f64>>,
}

impl ActivationTrace {
    pub fn output(&self) -> &[f64] {
        self.logits.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Logit of a neuron in graph layer `layer` (>= 1).
    pub fn logit(&self, layer: usize, i: usize) -> f64 {
        self.logits[layer - 1][i]
    }
}

/// Computes the pre-activation output of one layer. Each output starts from
/// its bias and accumulates inputs in (channel, row, column) kernel order.
pub fn layer_forward(kind: &LayerKind, weight: &[f64], bias: &[f64], input: &[f64], out: &mut [f64]) {
    match *kind {
        LayerKind::Dense { inputs, outputs } => {
            for j in 0..outputs {
                let row = &weight[j * inputs..(j + 1) * inputs];
                let mut acc = bias[j];
                for (w, x) in row.iter().zip(input) {
                    acc += w * x;
                }
                out[j] = acc;
            }
        }
        LayerKind::Conv2d {
            in_channels,
            in_height,
            in_width,
            out_channels,
            kernel_h,
            kernel_w,
            stride,
        } => {
            let (_, oh, ow) = kind.output_shape();
            let ksize = kernel_h * kernel_w;
            for co in 0..out_channels {
                for y in 0..oh {
                    for x in 0..ow {
                        let mut acc = bias[co];
                        for ci in 0..in_channels {
                            let wbase = (co * in_channels + ci) * ksize;
                            for ky in 0..kernel_h {
                                let ibase = (ci * in_height + y * stride + ky) * in_width + x * stride;
                                for kx in 0..kernel_w {
                                    acc += weight[wbase + ky * kernel_w + kx] * input[ibase + kx];
                                }
                            }
                        }
                        out[(co * oh + y) * ow + x] = acc;
                    }
                }
            }
        }
        LayerKind::AvgPool2d {
            channels,
            in_height,
            in_width,
        } => {
            let (_, oh, ow) = kind.output_shape();
            for c in 0..channels {
                for y in 0..oh {
                    for x in 0..ow {
                        let mut acc = 0.0;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                acc += 0.25 * input[(c * in_height + 2 * y + dy) * in_width + 2 * x + dx];
                            }
                        }
                        out[(c * oh + y) * ow + x] = acc;
                    }
                }
            }
        }
    }
}

/// Accumulates parameter gradients of one layer given `delta = dL/dlogits`,
/// and writes `dL/dinput` into `d_input` when requested.
pub fn layer_backward(
    kind: &LayerKind,
    weight: &[f64],
    input: &[f64],
    delta: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    mut d_input: Option<&mut [f64]>,
) {
    if let Some(d) = d_input.as_deref_mut() {
        d.fill(0.0);
    }
    match *kind {
        LayerKind::Dense { inputs, outputs } => {
            for j in 0..outputs {
                let dj = delta[j];
                grad_b[j] += dj;
                if dj == 0.0 {
                    continue;
                }
                let gw = &mut grad_w[j * inputs..(j + 1) * inputs];
                for (g, x) in gw.iter_mut().zip(input) {
                    *g += dj * x;
                }
                if let Some(d) = d_input.as_deref_mut() {
                    let row = &weight[j * inputs..(j + 1) * inputs];
                    for (di, w) in d.iter_mut().zip(row) {
                        *di += dj * w;
                    }
                }
            }
        }
        LayerKind::Conv2d {
            in_channels,
            in_height,
            in_width,
            out_channels,
            kernel_h,
            kernel_w,
            stride,
        } => {
            let (_, oh, ow) = kind.output_shape();
            let ksize = kernel_h * kernel_w;
            for co in 0..out_channels {
                for y in 0..oh {
                    for x in 0..ow {
                        let dj = delta[(co * oh + y) * ow + x];
                        grad_b[co] += dj;
                        if dj == 0.0 {
                            continue;
                        }
                        for ci in 0..in_channels {
                            let wbase = (co * in_channels + ci) * ksize;
                            for ky in 0..kernel_h {
                                let ibase = (ci * in_height + y * stride + ky) * in_width + x * stride;
                                for kx in 0..kernel_w {
                                    grad_w[wbase + ky * kernel_w + kx] += dj * input[ibase + kx];
                                    if let Some(d) = d_input.as_deref_mut() {
                                        d[ibase + kx] += dj * weight[wbase + ky * kernel_w + kx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        LayerKind::AvgPool2d {
            channels,
            in_height,
            in_width,
        } => {
            if let Some(d) = d_input {
                let (_, oh, ow) = kind.output_shape();
                for c in 0..channels {
                    for y in 0..oh {
                        for x in 0..ow {
                            let dj = 0.25 * delta[(c * oh + y) * ow + x];
                            for dy in 0..2 {
                                for dx in 0..2 {
                                    d[(c * in_height + 2 * y + dy) * in_width + 2 * x + dx] += dj;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Runs the model on `x`, returning the output logits and the full trace.
pub fn forward(model: &ModelSpec, x: &[f64]) -> Result<(Vec<f64>, ActivationTrace)> {
    if x.len() != model.input_dims {
        return invalid(format!("expected {} inputs, got {}", model.input_dims, x.len()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return invalid("input contains a non-finite value");
    }
    let kinds = model.neuron_kinds();
    let mut logits = Vec::with_capacity(model.layers.len());
    let mut activations = Vec::with_capacity(model.layers.len() + 1);
    activations.push(x.to_vec());
    for (k, layer) in model.layers.iter().enumerate() {
        let mut z = vec![0.0; layer.kind.output_len()];
        layer_forward(&layer.kind, &layer.weight, &layer.bias, &activations[k], &mut z);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow(format!("layer {k} produced a non-finite logit")));
        }
        let kind = kinds[k + 1];
        let a: Vec<f64> = if kind == NeuronKind::Identity {
            z.clone()
        } else {
            z.iter().map(|&v| kind.apply(v)).collect()
        };
        logits.push(z);
        activations.push(a);
    }
    let out = logits.last().cloned().unwrap_or_default();
    Ok((out, ActivationTrace { logits, activations }))
}

/// Output logits only, reusing two scratch buffers. Panics on shape mismatch.
pub fn logits_into(model: &ModelSpec, x: &[f64], scratch: &mut (Vec<f64>, Vec<f64>)) -> Vec<f64> {
    let kinds = model.neuron_kinds();
    let (a, b) = scratch;
    a.clear();
    a.extend_from_slice(x);
    for (k, layer) in model.layers.iter().enumerate() {
        b.clear();
        b.resize(layer.kind.output_len(), 0.0);
        layer_forward(&layer.kind, &layer.weight, &layer.bias, a, b);
        let kind = kinds[k + 1];
        if kind != NeuronKind::Identity {
            for v in b.iter_mut() {
                *v = kind.apply(*v);
            }
        }
        std::mem::swap(a, b);
    }
    a.clone()
}

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn predict(model: &ModelSpec, x: &[f64]) -> Result<usize> {
    let (out, _) = forward(model, x)?;
    Ok(argmax(&out))
}
