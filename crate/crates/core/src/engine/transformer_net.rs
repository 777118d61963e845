//! Post-LN BERT-style encoder.
//!
//! Token ids are embedded and added to learned positions (or a pre-embedded
//! noise batch is added to the positions directly), followed by a layer norm
//! and `L` blocks of `LN(x + MHA(x))`, `LN(x + W2·GELU(W1·x))`. Only the FFN
//! GELU outputs are captured, `T · d_ff` sites per layer.

use super::batch::{BatchData, InputBatch, InputDims};
use super::init::Init;
use super::record::{ActivationKind, Recorder};
use super::tensor::{cast_weights, layer_norm, Linear, Scalar};
use super::EngineError;
use crate::netgraph::TransformerGenome;

#[derive(Debug, Clone)]
struct Block {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    ff1: Linear,
    ff2: Linear,
}

#[derive(Debug, Clone)]
pub(crate) struct TransformerNet {
    g: TransformerGenome,
    token_embedding: Vec<f32>,
    position_embedding: Vec<f32>,
    blocks: Vec<Block>,
}

impl TransformerNet {
    pub fn build(g: &TransformerGenome, init: &mut Init) -> TransformerNet {
        let d = g.d_model;
        let token_embedding = init.normal(g.vocab * d, 1.0);
        let position_embedding = init.normal(g.seq_len * d, 1.0);
        let blocks = (0..g.layers)
            .map(|_| Block {
                q: init.linear(d, d, true),
                k: init.linear(d, d, true),
                v: init.linear(d, d, true),
                o: init.linear(d, d, true),
                ff1: init.linear(d, g.d_ff, true),
                ff2: init.linear(g.d_ff, d, true),
            })
            .collect();
        TransformerNet {
            g: *g,
            token_embedding,
            position_embedding,
            blocks,
        }
    }

    fn linears(&self) -> impl Iterator<Item = &Linear> {
        self.blocks
            .iter()
            .flat_map(|b| [&b.q, &b.k, &b.v, &b.o, &b.ff1, &b.ff2])
    }

    pub fn param_count(&self) -> u64 {
        let d = self.g.d_model as u64;
        // embedding LN + two LNs per block, two parameters per feature
        let norms = 2 * d * (1 + 2 * self.g.layers as u64);
        (self.token_embedding.len() + self.position_embedding.len()) as u64
            + norms
            + self.linears().map(Linear::param_count).sum::<u64>()
    }

    pub fn first_layer(&self) -> &[f32] {
        &self.token_embedding
    }

    pub fn all_weights(&self) -> impl Iterator<Item = &[f32]> {
        [self.token_embedding.as_slice(), self.position_embedding.as_slice()]
            .into_iter()
            .chain(self.linears().map(|l| l.weight.as_slice()))
    }

    /// Per-sample MACs: Q/K/V/O projections, score and context products,
    /// and both FFN projections.
    pub fn macs(&self) -> u64 {
        let (t, d, f) = (self.g.seq_len as u64, self.g.d_model as u64, self.g.d_ff as u64);
        self.g.layers as u64 * (4 * t * d * d + 2 * t * t * d + 2 * t * d * f)
    }

    pub fn check_input(&self, batch: &InputBatch) -> Result<(), EngineError> {
        let ok = match (batch.dims, &batch.data) {
            (InputDims::Tokens { t }, BatchData::Tokens(ids)) => {
                if let Some(&bad) = ids.iter().find(|&&id| id as usize >= self.g.vocab) {
                    return Err(EngineError::ShapeMismatch(format!(
                        "token id {bad} outside vocabulary of {}",
                        self.g.vocab
                    )));
                }
                t == self.g.seq_len
            }
            (InputDims::Embedded { t, d }, BatchData::Values(_)) => t == self.g.seq_len && d == self.g.d_model,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(EngineError::ShapeMismatch(format!(
                "batch dims {} do not fit a transformer with T={} d_model={}",
                batch.dims, self.g.seq_len, self.g.d_model
            )))
        }
    }

    pub fn forward<T: Scalar>(&self, batch: &InputBatch, rec: &mut Recorder) -> Result<(), EngineError> {
        self.check_input(batch)?;
        let (s, t, d) = (batch.samples, self.g.seq_len, self.g.d_model);
        let pos: Vec<T> = cast_weights(&self.position_embedding);
        let mut x: Vec<T> = match &batch.data {
            BatchData::Tokens(ids) => ids
                .iter()
                .flat_map(|&id| {
                    let id = id as usize;
                    self.token_embedding[id * d..(id + 1) * d].iter().map(|&v| T::from_f32(v))
                })
                .collect(),
            BatchData::Values(v) => v.iter().map(|&v| T::from_f32(v)).collect(),
        };
        for (i, xv) in x.iter_mut().enumerate() {
            *xv = *xv + pos[i % (t * d)];
        }
        layer_norm(&mut x, d);
        let rows = s * t;
        for (li, block) in self.blocks.iter().enumerate() {
            let attn = self.attention(block, &x, s);
            for (a, b) in x.iter_mut().zip(&attn) {
                *a = *a + *b;
            }
            layer_norm(&mut x, d);
            let mut h = block.ff1.forward(&x, rows);
            rec.activate(format!("l{li}.ffn.gelu"), ActivationKind::Gelu, &mut h)?;
            let y = block.ff2.forward(&h, rows);
            for (a, b) in x.iter_mut().zip(&y) {
                *a = *a + *b;
            }
            layer_norm(&mut x, d);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(EngineError::NumericOverflow { layer: "encoder.output".into() });
        }
        Ok(())
    }

    fn attention<T: Scalar>(&self, block: &Block, x: &[T], samples: usize) -> Vec<T> {
        let (t, d, heads) = (self.g.seq_len, self.g.d_model, self.g.heads);
        let dh = d / heads;
        let rows = samples * t;
        let q = block.q.forward(x, rows);
        let k = block.k.forward(x, rows);
        let v = block.v.forward(x, rows);
        let scale = T::from_f64(1.0 / (dh as f64).sqrt());
        let mut ctx = vec![T::zero(); rows * d];
        let mut scores = vec![T::zero(); t];
        for s in 0..samples {
            for h in 0..heads {
                let col = |r: usize| s * t * d + r * d + h * dh;
                for i in 0..t {
                    let qi = &q[col(i)..col(i) + dh];
                    let mut max = T::neg_infinity();
                    for (j, sc) in scores.iter_mut().enumerate() {
                        let kj = &k[col(j)..col(j) + dh];
                        let dot = qi.iter().zip(kj).fold(T::zero(), |a, (&x, &y)| a + x * y);
                        *sc = dot * scale;
                        max = max.max(*sc);
                    }
                    let mut denom = T::zero();
                    for sc in scores.iter_mut() {
                        *sc = (*sc - max).exp();
                        denom = denom + *sc;
                    }
                    let out = &mut ctx[col(i)..col(i) + dh];
                    for (j, &p) in scores.iter().enumerate() {
                        let w = p / denom;
                        for (o, &vv) in out.iter_mut().zip(&v[col(j)..col(j) + dh]) {
                            *o = *o + w * vv;
                        }
                    }
                }
            }
        }
        block.o.forward(&ctx, rows)
    }
}
