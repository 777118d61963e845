//! Stacked-cell CNN shared by the NB201 and DLITE spaces.
//!
//! ```text
//! stem:   conv3x3(3 -> C) + BN
//! stage 1: N cells at C channels
//! reduce: residual block, stride 2, C -> 2C
//! stage 2: N cells at 2C
//! reduce: residual block, stride 2, 2C -> 4C
//! stage 3: N cells at 4C
//! head:   BN + ReLU + global average pool + linear(4C -> 10)
//! ```
//!
//! The reduction block is `ReLU-conv3x3/2-BN -> ReLU-conv3x3-BN` plus an
//! `avgpool2x2/2 -> conv1x1` shortcut. Convolutions in the cell network carry
//! no bias; batch norms count two (unit scale, zero shift) parameters per
//! channel.

use super::init::Init;
use super::record::{ActivationKind, Recorder};
use super::tensor::{batch_norm, global_avg_pool, pool2d, Conv2d, Linear, NormMode, PoolKind, Scalar, Tensor};
use super::EngineError;
use crate::netgraph::{CellGenome, OpLabel};

pub const NUM_CLASSES: usize = 10;
pub const INPUT_CHANNELS: usize = 3;

#[derive(Debug, Clone)]
enum CellOp {
    Zero,
    Identity,
    ReluConvBn(Conv2d),
    AvgPool,
    MaxPool,
    /// (depthwise, pointwise) pairs, each preceded by a ReLU and followed by BN.
    Stacked(Vec<(Conv2d, Conv2d)>),
}

#[derive(Debug, Clone)]
struct CellInstance {
    nodes: usize,
    edges: Vec<(usize, usize, CellOp)>,
    leaves: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Reduction {
    conv_a: Conv2d,
    conv_b: Conv2d,
    shortcut: Conv2d,
}

#[derive(Debug, Clone)]
struct Stage {
    reduction: Option<Reduction>,
    cells: Vec<CellInstance>,
}

#[derive(Debug, Clone)]
pub(crate) struct CellNet {
    stem: Conv2d,
    stages: Vec<Stage>,
    head: Linear,
    bn_params: u64,
}

fn build_op(op: OpLabel, c: usize, init: &mut Init, bn_params: &mut u64) -> CellOp {
    let mut bn = |n: usize| *bn_params += 2 * n as u64;
    match op {
        OpLabel::None => CellOp::Zero,
        OpLabel::Skip => CellOp::Identity,
        OpLabel::AvgPool3x3 => CellOp::AvgPool,
        OpLabel::MaxPool3x3 => CellOp::MaxPool,
        OpLabel::Conv1x1 | OpLabel::Conv3x3 => {
            let k = if op == OpLabel::Conv1x1 { 1 } else { 3 };
            bn(c);
            CellOp::ReluConvBn(init.conv(c, c, k, 1, k / 2, 1, 1, false))
        }
        OpLabel::SepConv3x3 | OpLabel::SepConv5x5 => {
            let k = if op == OpLabel::SepConv3x3 { 3 } else { 5 };
            let mut pairs = Vec::new();
            for _ in 0..2 {
                let dw = init.conv(c, c, k, 1, k / 2, 1, c, false);
                let pw = init.conv(c, c, 1, 1, 0, 1, 1, false);
                bn(c);
                pairs.push((dw, pw));
            }
            CellOp::Stacked(pairs)
        }
        OpLabel::DilConv3x3 | OpLabel::DilConv5x5 => {
            let k = if op == OpLabel::DilConv3x3 { 3 } else { 5 };
            let dw = init.conv(c, c, k, 1, k - 1, 2, c, false);
            let pw = init.conv(c, c, 1, 1, 0, 1, 1, false);
            bn(c);
            CellOp::Stacked(vec![(dw, pw)])
        }
    }
}

impl CellNet {
    pub fn build(g: &CellGenome, init: &mut Init) -> CellNet {
        let c0 = g.stem_channels;
        let mut bn_params = 2 * c0 as u64;
        let stem = init.conv(INPUT_CHANNELS, c0, 3, 1, 1, 1, 1, false);
        let leaves = g.leaf_nodes();
        let mut stages = Vec::new();
        for stage in 0..3 {
            let c = c0 << stage;
            let reduction = (stage > 0).then(|| {
                let cin = c / 2;
                bn_params += 4 * c as u64;
                Reduction {
                    conv_a: init.conv(cin, c, 3, 2, 1, 1, 1, false),
                    conv_b: init.conv(c, c, 3, 1, 1, 1, 1, false),
                    shortcut: init.conv(cin, c, 1, 1, 0, 1, 1, false),
                }
            });
            let cells = (0..g.stack_depth)
                .map(|_| CellInstance {
                    nodes: g.nodes,
                    edges: g
                        .edges
                        .iter()
                        .map(|e| (e.src, e.dst, build_op(e.op, c, init, &mut bn_params)))
                        .collect(),
                    leaves: leaves.clone(),
                })
                .collect();
            stages.push(Stage { reduction, cells });
        }
        let c_last = c0 << 2;
        bn_params += 2 * c_last as u64;
        let head = init.linear(c_last, NUM_CLASSES, true);
        CellNet {
            stem,
            stages,
            head,
            bn_params,
        }
    }

    fn convs(&self) -> impl Iterator<Item = &Conv2d> {
        let cell_convs = self.stages.iter().flat_map(|s| {
            let red = s
                .reduction
                .iter()
                .flat_map(|r| [&r.conv_a, &r.conv_b, &r.shortcut]);
            let cells = s.cells.iter().flat_map(|cell| {
                cell.edges.iter().flat_map(|(_, _, op)| -> Vec<&Conv2d> {
                    match op {
                        CellOp::ReluConvBn(c) => vec![c],
                        CellOp::Stacked(pairs) => pairs.iter().flat_map(|(a, b)| [a, b]).collect(),
                        _ => Vec::new(),
                    }
                })
            });
            red.chain(cells)
        });
        std::iter::once(&self.stem).chain(cell_convs)
    }

    pub fn param_count(&self) -> u64 {
        self.convs().map(Conv2d::param_count).sum::<u64>() + self.bn_params + self.head.param_count()
    }

    pub fn first_layer(&self) -> &[f32] {
        &self.stem.weight
    }

    pub fn all_weights(&self) -> impl Iterator<Item = &[f32]> {
        self.convs()
            .map(|c| c.weight.as_slice())
            .chain(std::iter::once(self.head.weight.as_slice()))
    }

    /// Per-sample MACs for an `h x w` input.
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let mut total = self.stem.macs(h, w);
        let (mut h, mut w) = (h, w);
        for stage in &self.stages {
            if let Some(r) = &stage.reduction {
                total += r.conv_a.macs(h, w);
                let (oh, ow) = r.conv_a.output_size(h, w).unwrap();
                total += r.conv_b.macs(oh, ow);
                let (ph, pw) = (
                    super::tensor::pool_output_len(h, 2, 2, 0),
                    super::tensor::pool_output_len(w, 2, 2, 0),
                );
                total += r.shortcut.macs(ph, pw);
                (h, w) = (oh, ow);
            }
            for cell in &stage.cells {
                for (_, _, op) in &cell.edges {
                    total += match op {
                        CellOp::ReluConvBn(c) => c.macs(h, w),
                        CellOp::Stacked(pairs) => pairs.iter().map(|(a, b)| a.macs(h, w) + b.macs(h, w)).sum(),
                        _ => 0,
                    };
                }
            }
        }
        total + self.head.macs()
    }

    pub fn forward<T: Scalar>(&self, x: Tensor<T>, norm: NormMode, rec: &mut Recorder) -> Result<(), EngineError> {
        let mut x = self.stem.forward(&x);
        batch_norm(&mut x, norm);
        for (si, stage) in self.stages.iter().enumerate() {
            if let Some(r) = &stage.reduction {
                x = reduce(r, &x, norm, rec, &format!("s{si}.reduce"))?;
            }
            for (ci, cell) in stage.cells.iter().enumerate() {
                x = cell_forward(cell, x, norm, rec, &format!("s{si}.c{ci}"))?;
            }
        }
        batch_norm(&mut x, norm);
        rec.activate("head.relu", ActivationKind::Relu, &mut x.data)?;
        let pooled = global_avg_pool(&x);
        let logits = self.head.forward(&pooled, x.n);
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(EngineError::NumericOverflow { layer: "head.linear".into() });
        }
        Ok(())
    }
}

fn relu_conv_bn<T: Scalar>(
    conv: &Conv2d,
    x: &Tensor<T>,
    norm: NormMode,
    rec: &mut Recorder,
    name: String,
) -> Result<Tensor<T>, EngineError> {
    let mut y = x.clone();
    rec.activate(name, ActivationKind::Relu, &mut y.data)?;
    let mut y = conv.forward(&y);
    batch_norm(&mut y, norm);
    Ok(y)
}

fn reduce<T: Scalar>(
    r: &Reduction,
    x: &Tensor<T>,
    norm: NormMode,
    rec: &mut Recorder,
    name: &str,
) -> Result<Tensor<T>, EngineError> {
    let a = relu_conv_bn(&r.conv_a, x, norm, rec, format!("{name}.a.relu"))?;
    let mut b = relu_conv_bn(&r.conv_b, &a, norm, rec, format!("{name}.b.relu"))?;
    let shortcut = r.shortcut.forward(&pool2d(x, PoolKind::Average, 2, 2, 0));
    b.add_assign(&shortcut);
    Ok(b)
}

fn cell_forward<T: Scalar>(
    cell: &CellInstance,
    x: Tensor<T>,
    norm: NormMode,
    rec: &mut Recorder,
    name: &str,
) -> Result<Tensor<T>, EngineError> {
    let zeros = Tensor::zeros(x.n, x.c, x.h, x.w);
    let mut states: Vec<Option<Tensor<T>>> = vec![None; cell.nodes + 1];
    states[0] = Some(x);
    for (ei, (src, dst, op)) in cell.edges.iter().enumerate() {
        let input = states[*src].as_ref().expect("sources precede destinations");
        let edge_name = format!("{name}.e{ei}");
        let out = match op {
            CellOp::Zero => None,
            CellOp::Identity => Some(input.clone()),
            CellOp::AvgPool => Some(pool2d(input, PoolKind::Average, 3, 1, 1)),
            CellOp::MaxPool => Some(pool2d(input, PoolKind::Max, 3, 1, 1)),
            CellOp::ReluConvBn(conv) => Some(relu_conv_bn(conv, input, norm, rec, format!("{edge_name}.relu"))?),
            CellOp::Stacked(pairs) => {
                let mut y = input.clone();
                for (pi, (dw, pw)) in pairs.iter().enumerate() {
                    rec.activate(format!("{edge_name}.relu{pi}"), ActivationKind::Relu, &mut y.data)?;
                    y = pw.forward(&dw.forward(&y));
                    batch_norm(&mut y, norm);
                }
                Some(y)
            }
        };
        let slot = &mut states[*dst];
        match (slot.as_mut(), out) {
            (Some(acc), Some(o)) => acc.add_assign(&o),
            (None, Some(o)) => *slot = Some(o),
            (None, None) => *slot = Some(zeros.clone()),
            (Some(_), None) => {}
        }
    }
    let mut out = zeros;
    for &leaf in &cell.leaves {
        out.add_assign(states[leaf].as_ref().expect("every node has an input"));
    }
    Ok(out)
}
