//! Plain layer stacks (conv / dense / activation), used for hand-built
//! reference networks and for checking the closed-form site count.

use super::batch::{BatchData, InputBatch, InputDims};
use super::init::Init;
use super::record::{ActivationKind, Recorder};
use super::tensor::{Conv2d, Linear, Scalar, Tensor};
use super::EngineError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SeqLayer {
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    },
    /// Flattens its input implicitly.
    Dense { out_features: usize, bias: bool },
    Relu,
    Gelu,
    Flatten,
}

impl SeqLayer {
    pub fn conv(out_channels: usize, kernel: usize, stride: usize) -> Self {
        SeqLayer::Conv {
            out_channels,
            kernel,
            stride,
            padding: 0,
            bias: true,
        }
    }

    pub fn dense(out_features: usize) -> Self {
        SeqLayer::Dense {
            out_features,
            bias: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SequentialNet {
    /// Per-sample input shape; a feature vector of length n is `Image { c: n, h: 1, w: 1 }`.
    pub input: InputDims,
    pub layers: Vec<SeqLayer>,
}

impl SequentialNet {
    pub fn new(input: InputDims, layers: Vec<SeqLayer>) -> Self {
        SequentialNet { input, layers }
    }

    pub fn features(n: usize, layers: Vec<SeqLayer>) -> Self {
        SequentialNet::new(InputDims::Image { c: n, h: 1, w: 1 }, layers)
    }
}

#[derive(Debug, Clone)]
enum Built {
    Conv(Conv2d),
    Dense(Linear),
    Act(ActivationKind),
    Flatten,
}

#[derive(Debug, Clone)]
pub(crate) struct SequentialModel {
    input: (usize, usize, usize),
    layers: Vec<Built>,
}

impl SequentialModel {
    pub fn build(spec: &SequentialNet, init: &mut Init) -> Result<SequentialModel, EngineError> {
        let InputDims::Image { c, h, w } = spec.input else {
            return Err(EngineError::ShapeMismatch("sequential nets take image-shaped input".into()));
        };
        if c == 0 || h == 0 || w == 0 {
            return Err(EngineError::DegenerateShape("input has a zero dimension".into()));
        }
        let (mut c, mut h, mut w) = (c, h, w);
        let mut layers = Vec::new();
        for (i, layer) in spec.layers.iter().enumerate() {
            let built = match *layer {
                SeqLayer::Conv {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    bias,
                } => {
                    if out_channels == 0 || kernel == 0 || stride == 0 {
                        return Err(EngineError::DegenerateShape(format!("layer {i}: zero conv parameter")));
                    }
                    let conv = init.conv(c, out_channels, kernel, stride, padding, 1, 1, bias);
                    let (oh, ow) = conv.output_size(h, w).ok_or_else(|| {
                        EngineError::DegenerateShape(format!(
                            "layer {i}: {kernel}x{kernel} kernel on a {h}x{w} map collapses to zero size"
                        ))
                    })?;
                    (c, h, w) = (out_channels, oh, ow);
                    Built::Conv(conv)
                }
                SeqLayer::Dense { out_features, bias } => {
                    if out_features == 0 {
                        return Err(EngineError::DegenerateShape(format!("layer {i}: zero-width dense layer")));
                    }
                    let lin = init.linear(c * h * w, out_features, bias);
                    (c, h, w) = (out_features, 1, 1);
                    Built::Dense(lin)
                }
                SeqLayer::Relu => Built::Act(ActivationKind::Relu),
                SeqLayer::Gelu => Built::Act(ActivationKind::Gelu),
                SeqLayer::Flatten => {
                    (c, h, w) = (c * h * w, 1, 1);
                    Built::Flatten
                }
            };
            layers.push(built);
        }
        let InputDims::Image { c, h, w } = spec.input else { unreachable!() };
        Ok(SequentialModel {
            input: (c, h, w),
            layers,
        })
    }

    pub fn param_count(&self) -> u64 {
        self.layers
            .iter()
            .map(|l| match l {
                Built::Conv(c) => c.param_count(),
                Built::Dense(d) => d.param_count(),
                _ => 0,
            })
            .sum()
    }

    pub fn first_layer(&self) -> &[f32] {
        self.all_weights().next().unwrap_or(&[])
    }

    pub fn all_weights(&self) -> impl Iterator<Item = &[f32]> {
        self.layers.iter().filter_map(|l| match l {
            Built::Conv(c) => Some(c.weight.as_slice()),
            Built::Dense(d) => Some(d.weight.as_slice()),
            _ => None,
        })
    }

    pub fn macs(&self) -> u64 {
        let (_, mut h, mut w) = self.input;
        let mut total = 0;
        for l in &self.layers {
            match l {
                Built::Conv(c) => {
                    total += c.macs(h, w);
                    (h, w) = c.output_size(h, w).unwrap();
                }
                Built::Dense(d) => {
                    total += d.macs();
                    (h, w) = (1, 1);
                }
                Built::Flatten => (h, w) = (1, 1),
                Built::Act(_) => {}
            }
        }
        total
    }

    /// Closed-form site count: each activation contributes the output size
    /// of the conv (`c * (floor((w-k)/t)+1) * (floor((h-k)/t)+1)`) or dense
    /// layer feeding it. Padded convolutions have no closed form here.
    pub fn sites_formula(&self) -> Result<u64, EngineError> {
        let (_, mut h, mut w) = self.input;
        let mut total = 0u64;
        let mut pending: Option<u64> = None;
        for (i, l) in self.layers.iter().enumerate() {
            match l {
                Built::Conv(c) => {
                    if c.padding != 0 {
                        return Err(EngineError::FormulaInapplicable(format!(
                            "layer {i} is a padded convolution"
                        )));
                    }
                    let (k, t) = (c.kernel, c.stride);
                    let (oh, ow) = ((h - k) / t + 1, (w - k) / t + 1);
                    pending = Some((c.out_channels * ow * oh) as u64);
                    (h, w) = (oh, ow);
                }
                Built::Dense(d) => {
                    pending = Some(d.out_features as u64);
                    (h, w) = (1, 1);
                }
                Built::Flatten => (h, w) = (1, 1),
                Built::Act(_) => {
                    total += pending.take().ok_or_else(|| {
                        EngineError::FormulaInapplicable(format!(
                            "activation {i} is not fed by a convolution or dense layer"
                        ))
                    })?;
                }
            }
        }
        Ok(total)
    }

    pub fn check_input(&self, batch: &InputBatch) -> Result<(), EngineError> {
        let (c, h, w) = self.input;
        if batch.dims != (InputDims::Image { c, h, w }) || !matches!(batch.data, BatchData::Values(_)) {
            return Err(EngineError::ShapeMismatch(format!(
                "batch dims {} do not match network input {c}x{h}x{w}",
                batch.dims
            )));
        }
        Ok(())
    }

    pub fn forward<T: Scalar>(&self, batch: &InputBatch, rec: &mut Recorder) -> Result<(), EngineError> {
        self.check_input(batch)?;
        let BatchData::Values(v) = &batch.data else { unreachable!() };
        let (c, h, w) = self.input;
        let mut x = Tensor::<T>::from_f32(batch.samples, c, h, w, v);
        for (i, l) in self.layers.iter().enumerate() {
            match l {
                Built::Conv(conv) => x = conv.forward(&x),
                Built::Dense(d) => {
                    let out = d.forward(&x.data, x.n);
                    x = Tensor {
                        n: x.n,
                        c: d.out_features,
                        h: 1,
                        w: 1,
                        data: out,
                    };
                }
                Built::Flatten => {
                    x.c *= x.h * x.w;
                    x.h = 1;
                    x.w = 1;
                }
                Built::Act(kind) => rec.activate(format!("layer{i}"), *kind, &mut x.data)?,
            }
        }
        Ok(())
    }
}
