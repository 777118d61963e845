//! Deterministic initialisation and forward execution of untrained networks.
//!
//! A [`NetworkInstance`] is built once from an [`Architecture`] and an init
//! seed. [`NetworkInstance::forward_capture`] runs one forward pass and
//! records the Signum of every ReLU/GELU output as an [`ActivationRecord`].
//!
//! Counting conventions (per input sample):
//! * parameters: every conv/linear weight and bias, embeddings, and two
//!   parameters per channel of each batch/layer norm;
//! * FLOPs: multiply-accumulates of convolutions (`c_out · c_in/groups · k² ·
//!   H_out · W_out`), linear layers (`in · out`) and attention products
//!   (`2 · T² · d_model` per layer). Pooling, normalisation, activations and
//!   additions count zero.

pub mod batch;
mod cell_net;
mod init;
pub mod record;
mod sequential;
pub mod tensor;
mod transformer_net;

pub use batch::{BatchData, BatchKind, BatchSpec, InputBatch, InputDims};
pub use cell_net::{INPUT_CHANNELS, NUM_CLASSES};
pub use record::{ActivationKind, ActivationRecord, LayerSites};
pub use sequential::{SeqLayer, SequentialNet};
pub use tensor::NormMode;

use crate::netgraph::{encode, CellGenome, Genome, GenomeError, TransformerGenome};
use cell_net::CellNet;
use init::Init;
use record::Recorder;
use sequential::SequentialModel;
use serde::{Deserialize, Serialize};
use tensor::{Scalar, Tensor};
use thiserror::Error;
use transformer_net::TransformerNet;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("degenerate shape: {0}")]
    DegenerateShape(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("numeric overflow: non-finite activation at {layer}")]
    NumericOverflow { layer: String },
    #[error("closed-form site count inapplicable ({0}); use instrumented count")]
    FormulaInapplicable(String),
    #[error("bad batch file: {0}")]
    BadBatchFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Genome(#[from] GenomeError),
}

/// Forward-pass arithmetic precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// Anything the engine can instantiate.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Architecture {
    Cell(CellGenome),
    Transformer(TransformerGenome),
    Sequential(SequentialNet),
}

impl From<Genome> for Architecture {
    fn from(g: Genome) -> Self {
        match g {
            Genome::Cell(c) => Architecture::Cell(c),
            Genome::Transformer(t) => Architecture::Transformer(t),
        }
    }
}

impl From<&Genome> for Architecture {
    fn from(g: &Genome) -> Self {
        g.clone().into()
    }
}

impl From<SequentialNet> for Architecture {
    fn from(s: SequentialNet) -> Self {
        Architecture::Sequential(s)
    }
}

impl Architecture {
    pub fn genome(&self) -> Option<Genome> {
        match self {
            Architecture::Cell(c) => Some(Genome::Cell(c.clone())),
            Architecture::Transformer(t) => Some(Genome::Transformer(*t)),
            Architecture::Sequential(_) => None,
        }
    }

    /// Genome string, or a compact description for hand-built nets.
    pub fn describe(&self) -> String {
        match self.genome() {
            Some(g) => encode(&g),
            None => format!("sequential:{:?}", self),
        }
    }

    /// Input shape; cell networks accept any `h x w`.
    pub fn input_dims(&self, h: usize, w: usize) -> InputDims {
        match self {
            Architecture::Cell(_) => InputDims::Image {
                c: INPUT_CHANNELS,
                h,
                w,
            },
            Architecture::Transformer(t) => InputDims::Tokens { t: t.seq_len },
            Architecture::Sequential(s) => s.input,
        }
    }

    pub fn uses_gelu(&self) -> bool {
        match self {
            Architecture::Cell(_) => false,
            Architecture::Transformer(_) => true,
            Architecture::Sequential(s) => s.layers.contains(&SeqLayer::Gelu),
        }
    }
}

#[derive(Debug, Clone)]
enum Model {
    Cell(CellNet),
    Transformer(TransformerNet),
    Sequential(SequentialModel),
}

/// An architecture with concrete random weights.
#[derive(Debug, Clone)]
pub struct NetworkInstance {
    arch: Architecture,
    init_seed: u64,
    norm: NormMode,
    model: Model,
    param_count: u64,
    flop_count: u64,
}

/// Builds an instance with batch-statistics normalisation.
pub fn instantiate(arch: impl Into<Architecture>, init_seed: u64) -> Result<NetworkInstance, EngineError> {
    instantiate_with(arch, init_seed, NormMode::BatchStats)
}

pub fn instantiate_with(
    arch: impl Into<Architecture>,
    init_seed: u64,
    norm: NormMode,
) -> Result<NetworkInstance, EngineError> {
    let arch = arch.into();
    let mut init = Init::new(init_seed);
    let model = match &arch {
        Architecture::Cell(c) => {
            c.validate()?;
            Model::Cell(CellNet::build(c, &mut init))
        }
        Architecture::Transformer(t) => {
            t.validate()?;
            Model::Transformer(TransformerNet::build(t, &mut init))
        }
        Architecture::Sequential(s) => Model::Sequential(SequentialModel::build(s, &mut init)?),
    };
    let param_count = match &model {
        Model::Cell(m) => m.param_count(),
        Model::Transformer(m) => m.param_count(),
        Model::Sequential(m) => m.param_count(),
    };
    if param_count == 0 {
        return Err(EngineError::DegenerateShape("network has no parameters".into()));
    }
    let mut n = NetworkInstance {
        arch,
        init_seed,
        norm,
        model,
        param_count,
        flop_count: 0,
    };
    n.flop_count = n.count_flops(&n.nominal_dims())?;
    Ok(n)
}

impl NetworkInstance {
    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn norm_mode(&self) -> NormMode {
        self.norm
    }

    /// Θ, exact.
    pub fn param_count(&self) -> u64 {
        self.param_count
    }

    /// Θ in millions.
    pub fn params_m(&self) -> f64 {
        self.param_count as f64 / 1e6
    }

    /// MACs per sample at [`Self::nominal_dims`].
    pub fn flop_count(&self) -> u64 {
        self.flop_count
    }

    /// 3×32×32 for cell networks, the fixed input shape otherwise.
    pub fn nominal_dims(&self) -> InputDims {
        self.arch.input_dims(32, 32)
    }

    /// MACs per sample for the given input shape.
    pub fn count_flops(&self, dims: &InputDims) -> Result<u64, EngineError> {
        match (&self.model, dims) {
            (Model::Cell(m), InputDims::Image { c, h, w }) if *c == INPUT_CHANNELS && *h > 0 && *w > 0 => {
                Ok(m.macs(*h, *w))
            }
            (Model::Transformer(m), InputDims::Tokens { .. } | InputDims::Embedded { .. }) => Ok(m.macs()),
            (Model::Sequential(m), _) if *dims == self.nominal_dims() => Ok(m.macs()),
            _ => Err(EngineError::ShapeMismatch(format!(
                "input {dims} does not fit {}",
                self.arch.describe()
            ))),
        }
    }

    /// Site count from layer shapes alone: `Σ T·d_ff` for transformers and
    /// the valid-convolution formula for plain CNNs.
    pub fn count_sites_formula(&self) -> Result<u64, EngineError> {
        match &self.model {
            Model::Transformer(_) => {
                let Architecture::Transformer(g) = &self.arch else { unreachable!() };
                Ok((g.layers * g.seq_len * g.d_ff) as u64)
            }
            Model::Sequential(m) => m.sites_formula(),
            Model::Cell(_) => Err(EngineError::FormulaInapplicable(
                "cell networks use padded convolutions".into(),
            )),
        }
    }

    pub fn forward_capture(&self, batch: &InputBatch) -> Result<ActivationRecord, EngineError> {
        self.forward_capture_with(batch, Precision::F32)
    }

    pub fn forward_capture_with(&self, batch: &InputBatch, precision: Precision) -> Result<ActivationRecord, EngineError> {
        match precision {
            Precision::F32 => self.run::<f32>(batch),
            Precision::F64 => self.run::<f64>(batch),
        }
    }

    fn run<T: Scalar>(&self, batch: &InputBatch) -> Result<ActivationRecord, EngineError> {
        let mut rec = Recorder::new(batch.samples);
        match &self.model {
            Model::Cell(m) => {
                let (InputDims::Image { c, h, w }, BatchData::Values(v)) = (batch.dims, &batch.data) else {
                    return Err(EngineError::ShapeMismatch("cell networks take image batches".into()));
                };
                if c != INPUT_CHANNELS {
                    return Err(EngineError::ShapeMismatch(format!(
                        "cell networks take {INPUT_CHANNELS}-channel images, got {c}"
                    )));
                }
                m.forward(Tensor::<T>::from_f32(batch.samples, c, h, w, v), self.norm, &mut rec)?;
            }
            Model::Transformer(m) => m.forward::<T>(batch, &mut rec)?,
            Model::Sequential(m) => m.forward::<T>(batch, &mut rec)?,
        }
        Ok(rec.finish())
    }

    pub fn first_layer_weights(&self) -> &[f32] {
        match &self.model {
            Model::Cell(m) => m.first_layer(),
            Model::Transformer(m) => m.first_layer(),
            Model::Sequential(m) => m.first_layer(),
        }
    }

    /// FNV-1a over the bit patterns of every weight tensor.
    pub fn weights_checksum(&self) -> u64 {
        let tensors: Vec<&[f32]> = match &self.model {
            Model::Cell(m) => m.all_weights().collect(),
            Model::Transformer(m) => m.all_weights().collect(),
            Model::Sequential(m) => m.all_weights().collect(),
        };
        tensors.iter().fold(0xcbf2_9ce4_8422_2325, |h, t| fnv1a(h, t))
    }
}

pub fn checksum(values: &[f32]) -> u64 {
    fnv1a(0xcbf2_9ce4_8422_2325, values)
}

fn fnv1a(mut h: u64, values: &[f32]) -> u64 {
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}
