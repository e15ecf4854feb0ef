use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};

/// Hidden-layer nonlinearity. The output layer always emits raw logits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(format!("unknown activation `{other}`")),
        }
    }
}

/// What a neuron applies to its logit. Input, pooling and output neurons pass
/// their value through unchanged.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NeuronKind {
    Identity,
    Relu,
    Tanh,
}

impl NeuronKind {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            NeuronKind::Identity => x,
            NeuronKind::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            NeuronKind::Tanh => x.tanh(),
        }
    }

    /// Derivative of `apply` at `x`, using the subgradient 0 for ReLU at 0.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            NeuronKind::Identity => 1.0,
            NeuronKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            NeuronKind::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }
}

impl From<Activation> for NeuronKind {
    fn from(a: Activation) -> Self {
        match a {
            Activation::Relu => NeuronKind::Relu,
            Activation::Tanh => NeuronKind::Tanh,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    /// Fully connected; weight is row-major `outputs x inputs`.
    Dense { inputs: usize, outputs: usize },
    /// Valid (unpadded) 2-D convolution over a channel-major `c x h x w`
    /// input; weight is `out_channels x in_channels x kernel_h x kernel_w`.
    Conv2d {
        in_channels: usize,
        in_height: usize,
        in_width: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
    },
    /// Fixed 2x2 average pooling with stride 2. Carries no parameters.
    AvgPool2d {
        channels: usize,
        in_height: usize,
        in_width: usize,
    },
}

impl LayerKind {
    pub fn input_len(&self) -> usize {
        match *self {
            LayerKind::Dense { inputs, .. } => inputs,
            LayerKind::Conv2d {
                in_channels,
                in_height,
                in_width,
                ..
            } => in_channels * in_height * in_width,
            LayerKind::AvgPool2d {
                channels,
                in_height,
                in_width,
            } => channels * in_height * in_width,
        }
    }

    /// Spatial output size `(channels, height, width)`; dense layers report
    /// `(outputs, 1, 1)`.
    pub fn output_shape(&self) -> (usize, usize, usize) {
        match *self {
            LayerKind::Dense { outputs, .. } => (outputs, 1, 1),
            LayerKind::Conv2d {
                in_height,
                in_width,
                out_channels,
                kernel_h,
                kernel_w,
                stride,
                ..
            } => {
                let oh = conv_out(in_height, kernel_h, stride);
                let ow = conv_out(in_width, kernel_w, stride);
                (out_channels, oh, ow)
            }
            LayerKind::AvgPool2d {
                channels,
                in_height,
                in_width,
            } => (channels, in_height / 2, in_width / 2),
        }
    }

    pub fn output_len(&self) -> usize {
        let (c, h, w) = self.output_shape();
        c * h * w
    }

    pub fn weight_len(&self) -> usize {
        match *self {
            LayerKind::Dense { inputs, outputs } => inputs * outputs,
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                ..
            } => out_channels * in_channels * kernel_h * kernel_w,
            LayerKind::AvgPool2d { .. } => 0,
        }
    }

    pub fn bias_len(&self) -> usize {
        match *self {
            LayerKind::Dense { outputs, .. } => outputs,
            LayerKind::Conv2d { out_channels, .. } => out_channels,
            LayerKind::AvgPool2d { .. } => 0,
        }
    }

    pub fn is_trainable(&self) -> bool {
        !matches!(self, LayerKind::AvgPool2d { .. })
    }

    pub fn fan_in(&self) -> usize {
        match *self {
            LayerKind::Dense { inputs, .. } => inputs,
            LayerKind::Conv2d {
                in_channels,
                kernel_h,
                kernel_w,
                ..
            } => in_channels * kernel_h * kernel_w,
            LayerKind::AvgPool2d { .. } => 4,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            LayerKind::Dense { inputs, outputs } => {
                if inputs == 0 || outputs == 0 {
                    return invalid("dense layer with zero width");
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
                if in_channels == 0 || out_channels == 0 || kernel_h == 0 || kernel_w == 0 || stride == 0 {
                    return invalid("conv layer with a zero dimension");
                }
                if kernel_h > in_height || kernel_w > in_width {
                    return invalid(format!(
                        "conv kernel {kernel_h}x{kernel_w} does not fit input {in_height}x{in_width}"
                    ));
                }
            }
            LayerKind::AvgPool2d {
                channels,
                in_height,
                in_width,
            } => {
                if channels == 0 || in_height < 2 || in_width < 2 {
                    return invalid("pooling layer produces an empty output");
                }
            }
        }
        Ok(())
    }
}

fn conv_out(input: usize, kernel: usize, stride: usize) -> usize {
    if kernel > input || stride == 0 {
        0
    } else {
        (input - kernel) / stride + 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerSpec {
    pub fn zeros(kind: LayerKind) -> Self {
        let weight = vec![0.0; kind.weight_len()];
        let bias = vec![0.0; kind.bias_len()];
        LayerSpec { kind, weight, bias }
    }
}

/// A layered feedforward network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layers: Vec<LayerSpec>,
    pub activation: Activation,
    pub input_dims: usize,
    pub output_dims: usize,
    /// Seed used for initialization, kept for provenance.
    #[serde(default)]
    pub seed: u64,
}

/// Maps global weight ids onto `(layer, offset)` pairs. Only weights are
/// numbered; biases are never ranked.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    /// First global id of each layer's weight block.
    pub offsets: Vec<usize>,
    pub total: usize,
}

impl ParamLayout {
    pub fn locate(&self, id: usize) -> (usize, usize) {
        debug_assert!(id < self.total);
        // The last layer whose offset is <= id and that actually owns weights.
        let layer = match self.offsets.binary_search(&id) {
            Ok(mut k) => {
                while k + 1 < self.offsets.len() && self.offsets[k + 1] == id {
                    k += 1;
                }
                k
            }
            Err(k) => k - 1,
        };
        (layer, id - self.offsets[layer])
    }

    pub fn layer_range(&self, layer: usize) -> std::ops::Range<usize> {
        let end = self.offsets.get(layer + 1).copied().unwrap_or(self.total);
        self.offsets[layer]..end
    }
}

impl ModelSpec {
    /// Builds a model from layer kinds with seeded He-uniform weights
    /// (`U(-sqrt(6/fan_in), sqrt(6/fan_in))`) and zero biases.
    pub fn init(kinds: Vec<LayerKind>, activation: Activation, seed: u64) -> Result<Self> {
        if kinds.is_empty() {
            return invalid("model needs at least one layer");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(kinds.len());
        for kind in kinds {
            let mut layer = LayerSpec::zeros(kind);
            let bound = (6.0 / layer.kind.fan_in() as f64).sqrt();
            for w in layer.weight.iter_mut() {
                *w = rng.gen_range(-bound..bound);
            }
            layers.push(layer);
        }
        let input_dims = layers[0].kind.input_len();
        let output_dims = layers.last().unwrap().kind.output_len();
        let model = ModelSpec {
            layers,
            activation,
            input_dims,
            output_dims,
            seed,
        };
        model.validate()?;
        Ok(model)
    }

    /// Dense MLP with the given widths, e.g. `[784, 128, 64, 10]`.
    pub fn mlp(widths: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        if widths.len() < 2 {
            return invalid("an MLP needs an input and an output width");
        }
        let kinds = widths
            .windows(2)
            .map(|w| LayerKind::Dense {
                inputs: w[0],
                outputs: w[1],
            })
            .collect();
        Self::init(kinds, activation, seed)
    }

    /// LeNet-style network for 28x28 single-channel inputs:
    /// conv 8@5x5 -> pool -> conv 16@5x5 -> pool -> dense 64 -> dense 10.
    pub fn lenet_lite(activation: Activation, seed: u64) -> Result<Self> {
        let kinds = vec![
            LayerKind::Conv2d {
                in_channels: 1,
                in_height: 28,
                in_width: 28,
                out_channels: 8,
                kernel_h: 5,
                kernel_w: 5,
                stride: 1,
            },
            LayerKind::AvgPool2d {
                channels: 8,
                in_height: 24,
                in_width: 24,
            },
            LayerKind::Conv2d {
                in_channels: 8,
                in_height: 12,
                in_width: 12,
                out_channels: 16,
                kernel_h: 5,
                kernel_w: 5,
                stride: 1,
            },
            LayerKind::AvgPool2d {
                channels: 16,
                in_height: 8,
                in_width: 8,
            },
            LayerKind::Dense {
                inputs: 256,
                outputs: 64,
            },
            LayerKind::Dense {
                inputs: 64,
                outputs: 10,
            },
        ];
        Self::init(kinds, activation, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return invalid("model has no layers");
        }
        if self.layers[0].kind.input_len() != self.input_dims {
            return invalid(format!(
                "first layer expects {} inputs but input_dims = {}",
                self.layers[0].kind.input_len(),
                self.input_dims
            ));
        }
        for (k, layer) in self.layers.iter().enumerate() {
            layer.kind.validate()?;
            if layer.kind.output_len() == 0 {
                return invalid(format!("layer {k} has an empty output"));
            }
            if layer.weight.len() != layer.kind.weight_len() || layer.bias.len() != layer.kind.bias_len() {
                return invalid(format!("layer {k}: parameter block sizes do not match its shape"));
            }
            if let Some(next) = self.layers.get(k + 1) {
                if layer.kind.output_len() != next.kind.input_len() {
                    return invalid(format!(
                        "layer {k} emits {} values but layer {} expects {}",
                        layer.kind.output_len(),
                        k + 1,
                        next.kind.input_len()
                    ));
                }
            }
            if layer.weight.iter().chain(&layer.bias).any(|v| !v.is_finite()) {
                return invalid(format!("layer {k} holds a non-finite parameter"));
            }
        }
        if !self.layers.last().unwrap().kind.is_trainable() {
            return invalid("the output layer must be dense or convolutional");
        }
        if self.layers.last().unwrap().kind.output_len() != self.output_dims {
            return invalid("output_dims does not match the last layer");
        }
        Ok(())
    }

    /// Number of neurons in each graph layer, input layer first.
    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dims)
            .chain(self.layers.iter().map(|l| l.kind.output_len()))
            .collect()
    }

    /// Nonlinearity applied by the neurons of each graph layer (input first).
    pub fn neuron_kinds(&self) -> Vec<NeuronKind> {
        let last = self.layers.len() - 1;
        std::iter::once(NeuronKind::Identity)
            .chain(self.layers.iter().enumerate().map(|(k, l)| {
                if k == last || !l.kind.is_trainable() {
                    NeuronKind::Identity
                } else {
                    self.activation.into()
                }
            }))
            .collect()
    }

    pub fn param_layout(&self) -> ParamLayout {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut total = 0;
        for l in &self.layers {
            offsets.push(total);
            total += l.weight.len();
        }
        ParamLayout { offsets, total }
    }

    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len()).sum()
    }

    /// All weights concatenated in global id order.
    pub fn flat_weights(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weight.iter().copied()).collect()
    }

    pub fn weight(&self, layout: &ParamLayout, id: usize) -> f64 {
        let (layer, off) = layout.locate(id);
        self.layers[layer].weight[off]
    }

    /// SHA-256 over the architecture and the bit patterns of every parameter.
    pub fn hash_hex(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.activation.name().as_bytes());
        for l in &self.layers {
            h.update(serde_json::to_string(&l.kind).unwrap_or_default().as_bytes());
            for v in l.weight.iter().chain(&l.bias) {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn mean_abs_weight(&self) -> f64 {
        let n = self.weight_count();
        if n == 0 {
            return 0.0;
        }
        self.layers.iter().flat_map(|l| &l.weight).map(|w| w.abs()).sum::<f64>() / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_locates_across_pool_layers() {
        let m = ModelSpec::lenet_lite(Activation::Relu, 0).unwrap();
        let layout = m.param_layout();
        assert_eq!(layout.total, 200 + 3200 + 256 * 64 + 640);
        assert_eq!(layout.locate(0), (0, 0));
        assert_eq!(layout.locate(199), (0, 199));
        // Layer 1 is a pool with no weights; id 200 belongs to layer 2.
        assert_eq!(layout.locate(200), (2, 0));
        assert_eq!(layout.locate(layout.total - 1), (5, 639));
        assert!(layout.layer_range(1).is_empty());
    }

    #[test]
    fn shapes_must_compose() {
        let mut m = ModelSpec::mlp(&[4, 3, 2], Activation::Tanh, 1).unwrap();
        m.layers[1].kind = LayerKind::Dense { inputs: 5, outputs: 2 };
        m.layers[1].weight = vec![0.0; 10];
        assert!(m.validate().is_err());
    }

    #[test]
    fn non_finite_weights_rejected() {
        let mut m = ModelSpec::mlp(&[2, 2], Activation::Relu, 1).unwrap();
        m.layers[0].weight[0] = f64::NAN;
        assert!(m.validate().is_err());
    }

    #[test]
    fn init_is_seeded() {
        let a = ModelSpec::mlp(&[10, 5, 3], Activation::Relu, 7).unwrap();
        let b = ModelSpec::mlp(&[10, 5, 3], Activation::Relu, 7).unwrap();
        let c = ModelSpec::mlp(&[10, 5, 3], Activation::Relu, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let bound = (6.0f64 / 10.0).sqrt();
        assert!(a.layers[0].weight.iter().all(|w| w.abs() < bound));
    }

    #[test]
    fn neuron_kinds_skip_pool_and_output() {
        let m = ModelSpec::lenet_lite(Activation::Tanh, 0).unwrap();
        let kinds = m.neuron_kinds();
        assert_eq!(
            kinds,
            vec![
                NeuronKind::Identity,
                NeuronKind::Tanh,
                NeuronKind::Identity,
                NeuronKind::Tanh,
                NeuronKind::Identity,
                NeuronKind::Tanh,
                NeuronKind::Identity
            ]
        );
        assert_eq!(
            m.layer_sizes(),
            vec![784, 8 * 24 * 24, 8 * 12 * 12, 16 * 8 * 8, 256, 64, 10]
        );
    }
}
