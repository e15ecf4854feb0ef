//! Convolution and pooling as explicit sparse linear maps.

use crate::error::{invalid, Result};
use crate::nn::model::{LayerKind, LayerSpec};

/// One nonzero of an unrolled layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SparseEntry {
    pub out: usize,
    pub inp: usize,
    pub value: f64,
    /// Offset into the layer's weight block this entry replicates, or
    /// `None` for the fixed coefficients of a pooling layer.
    pub param: Option<usize>,
}

/// Sparse `rows x cols` matrix. Entries are grouped by output row and,
/// within a row, listed in the accumulation order of the direct kernels
/// (input channel, then kernel row, then kernel column).
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMap {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<SparseEntry>,
    /// Bias per output row, if the layer has one.
    pub bias: Option<Vec<f64>>,
}

impl SparseMap {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut out = match &self.bias {
            Some(b) => b.clone(),
            None => vec![0.0; self.rows],
        };
        for e in &self.entries {
            out[e.out] += e.value * x[e.inp];
        }
        out
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }
}

/// Unrolls a convolutional layer into a sparse map whose entries are tagged
/// with the kernel parameter they replicate.
pub fn unroll_conv(layer: &LayerSpec) -> Result<SparseMap> {
    match layer.kind {
        LayerKind::Conv2d { .. } => unroll_layer(&layer.kind, &layer.weight, Some(&layer.bias)),
        _ => invalid("unroll_conv expects a Conv2d layer"),
    }
}

/// Unrolls any layer kind. Dense layers yield every weight as an entry,
/// pooling layers yield fixed 0.25 coefficients without parameter ids.
pub fn unroll_layer(kind: &LayerKind, weight: &[f64], bias: Option<&[f64]>) -> Result<SparseMap> {
    if kind.output_len() == 0 {
        return invalid("layer geometry produces an empty output");
    }
    if weight.len() != kind.weight_len() {
        return invalid("weight block does not match layer geometry");
    }
    let rows = kind.output_len();
    let cols = kind.input_len();
    let mut entries = Vec::new();
    let mut out_bias = None;
    match *kind {
        LayerKind::Dense { inputs, outputs } => {
            entries.reserve(inputs * outputs);
            for j in 0..outputs {
                for i in 0..inputs {
                    let p = j * inputs + i;
                    entries.push(SparseEntry {
                        out: j,
                        inp: i,
                        value: weight[p],
                        param: Some(p),
                    });
                }
            }
            out_bias = bias.map(|b| b.to_vec());
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
            for co in 0..out_channels {
                for y in 0..oh {
                    for x in 0..ow {
                        let o = (co * oh + y) * ow + x;
                        for ci in 0..in_channels {
                            for ky in 0..kernel_h {
                                for kx in 0..kernel_w {
                                    let p = ((co * in_channels + ci) * kernel_h + ky) * kernel_w + kx;
                                    let i = (ci * in_height + y * stride + ky) * in_width + x * stride + kx;
                                    entries.push(SparseEntry {
                                        out: o,
                                        inp: i,
                                        value: weight[p],
                                        param: Some(p),
                                    });
                                }
                            }
                        }
                    }
                }
            }
            out_bias = bias.map(|b| {
                let per = oh * ow;
                (0..rows).map(|o| b[o / per]).collect()
            });
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
                        let o = (c * oh + y) * ow + x;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let i = (c * in_height + 2 * y + dy) * in_width + 2 * x + dx;
                                entries.push(SparseEntry {
                                    out: o,
                                    inp: i,
                                    value: 0.25,
                                    param: None,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(SparseMap {
        rows,
        cols,
        entries,
        bias: out_bias,
    })
}
