//! Searchable architecture spaces and the genetic operators over them.
//!
//! Three spaces are supported:
//!
//! * `NB201`: a 4-node cell (input + 3 intermediate nodes), every earlier node
//!   feeds every later one, ops from {none, skip, conv1x1, conv3x3, avgpool3x3}.
//! * `DLITE`: a reduced DARTS normal cell: one input node, `nodes` intermediate
//!   nodes, two incoming edges per node, seven non-zero DARTS ops.
//! * `TFORM`: a BERT-like encoder described by a handful of integers.
//!
//! Genomes are plain values. Every random operator takes an explicit seed.

mod codec;

pub use codec::{decode, encode, ParseError};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenomeError {
    #[error("unknown space `{0}`")]
    UnknownSpace(String),
    #[error("space mismatch: {0} vs {1}")]
    SpaceMismatch(SpaceId, SpaceId),
    #[error("shape mismatch between parents: {0}")]
    ShapeMismatch(String),
    #[error("no connectivity freedom: every edge has a single possible source")]
    NoConnectivityFreedom,
    #[error("no operation freedom: every edge already carries the only allowed label")]
    NoOperationFreedom,
    #[error("invalid genome: {0}")]
    Invalid(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

pub type Result<T> = std::result::Result<T, GenomeError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SpaceId {
    #[serde(rename = "NB201")]
    Nb201,
    #[serde(rename = "DLITE")]
    DartsLite,
    #[serde(rename = "TFORM")]
    Transformer,
}

impl SpaceId {
    pub const ALL: [SpaceId; 3] = [SpaceId::Nb201, SpaceId::DartsLite, SpaceId::Transformer];

    pub fn token(self) -> &'static str {
        match self {
            SpaceId::Nb201 => "NB201",
            SpaceId::DartsLite => "DLITE",
            SpaceId::Transformer => "TFORM",
        }
    }

    pub fn is_cell(self) -> bool {
        !matches!(self, SpaceId::Transformer)
    }
}

impl fmt::Display for SpaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for SpaceId {
    type Err = GenomeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "NB201" => Ok(SpaceId::Nb201),
            "DLITE" | "DARTS_LITE" | "DARTS-LITE" => Ok(SpaceId::DartsLite),
            "TFORM" | "TRANSFORMER" => Ok(SpaceId::Transformer),
            _ => Err(GenomeError::UnknownSpace(s.to_string())),
        }
    }
}

/// Operation carried by a cell edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpLabel {
    None,
    Skip,
    Conv1x1,
    Conv3x3,
    AvgPool3x3,
    MaxPool3x3,
    SepConv3x3,
    SepConv5x5,
    DilConv3x3,
    DilConv5x5,
}

impl OpLabel {
    pub const NB201: [OpLabel; 5] = [
        OpLabel::None,
        OpLabel::Skip,
        OpLabel::Conv1x1,
        OpLabel::Conv3x3,
        OpLabel::AvgPool3x3,
    ];

    pub const DARTS_LITE: [OpLabel; 7] = [
        OpLabel::MaxPool3x3,
        OpLabel::AvgPool3x3,
        OpLabel::Skip,
        OpLabel::SepConv3x3,
        OpLabel::SepConv5x5,
        OpLabel::DilConv3x3,
        OpLabel::DilConv5x5,
    ];

    pub fn token(self) -> &'static str {
        match self {
            OpLabel::None => "none",
            OpLabel::Skip => "skip_connect",
            OpLabel::Conv1x1 => "nor_conv_1x1",
            OpLabel::Conv3x3 => "nor_conv_3x3",
            OpLabel::AvgPool3x3 => "avg_pool_3x3",
            OpLabel::MaxPool3x3 => "max_pool_3x3",
            OpLabel::SepConv3x3 => "sep_conv_3x3",
            OpLabel::SepConv5x5 => "sep_conv_5x5",
            OpLabel::DilConv3x3 => "dil_conv_3x3",
            OpLabel::DilConv5x5 => "dil_conv_5x5",
        }
    }

    pub fn from_token(s: &str) -> Option<OpLabel> {
        const ALL: [OpLabel; 10] = [
            OpLabel::None,
            OpLabel::Skip,
            OpLabel::Conv1x1,
            OpLabel::Conv3x3,
            OpLabel::AvgPool3x3,
            OpLabel::MaxPool3x3,
            OpLabel::SepConv3x3,
            OpLabel::SepConv5x5,
            OpLabel::DilConv3x3,
            OpLabel::DilConv5x5,
        ];
        ALL.into_iter().find(|op| op.token() == s)
    }
}

impl fmt::Display for OpLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub op: OpLabel,
}

/// A cell DAG plus the macro-skeleton parameters it is stacked with.
///
/// Node 0 is the cell input, nodes `1..=nodes` are intermediate. Edges are
/// stored grouped by destination in increasing order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellGenome {
    pub space: SpaceId,
    pub nodes: usize,
    pub stem_channels: usize,
    pub stack_depth: usize,
    pub edges: Vec<Edge>,
}

impl CellGenome {
    pub fn new(
        space: SpaceId,
        nodes: usize,
        stem_channels: usize,
        stack_depth: usize,
        edges: Vec<Edge>,
    ) -> Result<Self> {
        let g = CellGenome {
            space,
            nodes,
            stem_channels,
            stack_depth,
            edges,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn alphabet(&self) -> &'static [OpLabel] {
        match self.space {
            SpaceId::Nb201 => &OpLabel::NB201,
            _ => &OpLabel::DARTS_LITE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GenomeError::Invalid(m));
        if !self.space.is_cell() {
            return bad(format!("{} is not a cell space", self.space));
        }
        if self.nodes == 0 || self.stem_channels == 0 || self.stack_depth == 0 {
            return bad("nodes, stem channels and stack depth must be positive".into());
        }
        let mut last_dst = 0;
        let mut fed = vec![false; self.nodes + 1];
        for (i, e) in self.edges.iter().enumerate() {
            if e.dst == 0 || e.dst > self.nodes {
                return bad(format!("edge {i}: destination {} out of range", e.dst));
            }
            if e.src >= e.dst {
                return bad(format!("edge {i}: source {} not before destination {}", e.src, e.dst));
            }
            if e.dst < last_dst {
                return bad(format!("edge {i}: edges not ordered by destination"));
            }
            if !self.alphabet().contains(&e.op) {
                return bad(format!("edge {i}: op {} not in the {} alphabet", e.op, self.space));
            }
            last_dst = e.dst;
            fed[e.dst] = true;
        }
        if let Some(n) = (1..=self.nodes).find(|&n| !fed[n]) {
            return bad(format!("node {n} has no incoming edge"));
        }
        Ok(())
    }

    /// Intermediate nodes that feed no other node; their sum is the cell output.
    pub fn leaf_nodes(&self) -> Vec<usize> {
        let mut used = vec![false; self.nodes + 1];
        for e in &self.edges {
            used[e.src] = true;
        }
        (1..=self.nodes).filter(|&n| !used[n]).collect()
    }
}

/// A BERT-like encoder configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TransformerGenome {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub seq_len: usize,
    pub vocab: usize,
}

impl TransformerGenome {
    pub fn new(
        layers: usize,
        heads: usize,
        d_model: usize,
        d_ff: usize,
        seq_len: usize,
        vocab: usize,
    ) -> Result<Self> {
        let g = TransformerGenome {
            layers,
            heads,
            d_model,
            d_ff,
            seq_len,
            vocab,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.layers,
            self.heads,
            self.d_model,
            self.d_ff,
            self.seq_len,
            self.vocab,
        ];
        if fields.contains(&0) {
            return Err(GenomeError::Invalid("transformer fields must be >= 1".into()));
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(GenomeError::Invalid(format!(
                "d_model {} not divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        Ok(())
    }

    /// Fields in ladder order: layers, heads, d_model, d_ff, seq_len, vocab.
    pub fn fields(&self) -> [usize; 6] {
        [
            self.layers,
            self.heads,
            self.d_model,
            self.d_ff,
            self.seq_len,
            self.vocab,
        ]
    }

    fn from_fields(f: [usize; 6]) -> Self {
        TransformerGenome {
            layers: f[0],
            heads: f[1],
            d_model: f[2],
            d_ff: f[3],
            seq_len: f[4],
            vocab: f[5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Genome {
    Cell(CellGenome),
    Transformer(TransformerGenome),
}

impl Genome {
    pub fn space(&self) -> SpaceId {
        match self {
            Genome::Cell(c) => c.space,
            Genome::Transformer(_) => SpaceId::Transformer,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Genome::Cell(c) => c.validate(),
            Genome::Transformer(t) => t.validate(),
        }
    }
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&encode(self))
    }
}

impl FromStr for Genome {
    type Err = GenomeError;

    fn from_str(s: &str) -> Result<Self> {
        decode(s)
    }
}

/// Discrete per-field value ladders of the transformer space. Mutation moves a
/// field one rung up or down; fields with a single rung are frozen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformerBounds {
    pub layers: Vec<usize>,
    pub heads: Vec<usize>,
    pub d_model: Vec<usize>,
    pub d_ff: Vec<usize>,
    pub seq_len: Vec<usize>,
    pub vocab: Vec<usize>,
}

impl Default for TransformerBounds {
    fn default() -> Self {
        TransformerBounds {
            layers: vec![1, 2, 3, 4],
            heads: vec![1, 2, 4, 8],
            d_model: vec![64, 128, 256],
            d_ff: vec![128, 256, 512, 1024],
            seq_len: vec![32],
            vocab: vec![1000],
        }
    }
}

impl TransformerBounds {
    fn ladders(&self) -> [&[usize]; 6] {
        [
            &self.layers,
            &self.heads,
            &self.d_model,
            &self.d_ff,
            &self.seq_len,
            &self.vocab,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for ladder in self.ladders() {
            if ladder.is_empty() || ladder.contains(&0) || ladder.windows(2).any(|w| w[0] >= w[1]) {
                return Err(GenomeError::Invalid(
                    "transformer bounds must be non-empty, positive and strictly increasing".into(),
                ));
            }
        }
        if let Some(&d) = self
            .d_model
            .iter()
            .find(|&&d| self.heads.iter().any(|&h| d % h != 0))
        {
            return Err(GenomeError::Invalid(format!(
                "d_model {d} is not divisible by every head count"
            )));
        }
        Ok(())
    }
}

/// Shape parameters used when sampling genomes of a space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceConfig {
    pub space: SpaceId,
    pub nodes: usize,
    pub stem_channels: usize,
    pub stack_depth: usize,
    pub transformer: TransformerBounds,
}

impl SpaceConfig {
    /// Full-size defaults: NB201 uses C=16, N=5 with 3 intermediate nodes,
    /// DLITE 4 intermediate nodes with C=16, N=2.
    pub fn new(space: SpaceId) -> Self {
        let (nodes, stem_channels, stack_depth) = match space {
            SpaceId::Nb201 => (3, 16, 5),
            SpaceId::DartsLite => (4, 16, 2),
            SpaceId::Transformer => (0, 0, 0),
        };
        SpaceConfig {
            space,
            nodes,
            stem_channels,
            stack_depth,
            transformer: TransformerBounds::default(),
        }
    }

    pub fn with_shape(mut self, stem_channels: usize, stack_depth: usize) -> Self {
        self.stem_channels = stem_channels;
        self.stack_depth = stack_depth;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.space {
            SpaceId::Transformer => self.transformer.validate(),
            SpaceId::Nb201 if self.nodes != 3 => {
                Err(GenomeError::Invalid("NB201 cells have exactly 3 intermediate nodes".into()))
            }
            _ if self.nodes == 0 || self.stem_channels == 0 || self.stack_depth == 0 => Err(
                GenomeError::Invalid("nodes, stem channels and stack depth must be positive".into()),
            ),
            _ => Ok(()),
        }
    }
}

pub(crate) fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws a genome with the space's default shape.
pub fn random_genome(space: SpaceId, seed: u64) -> Genome {
    random_genome_with(&SpaceConfig::new(space), seed)
}

pub fn random_genome_with(cfg: &SpaceConfig, seed: u64) -> Genome {
    let mut rng = rng_from(seed);
    match cfg.space {
        SpaceId::Transformer => {
            let fields = cfg.transformer.ladders().map(|l| *l.choose(&mut rng).unwrap());
            Genome::Transformer(TransformerGenome::from_fields(fields))
        }
        space => {
            let alphabet: &[OpLabel] = if space == SpaceId::Nb201 {
                &OpLabel::NB201
            } else {
                &OpLabel::DARTS_LITE
            };
            let mut edges = Vec::new();
            for dst in 1..=cfg.nodes {
                if space == SpaceId::Nb201 {
                    for src in 0..dst {
                        let op = *alphabet.choose(&mut rng).unwrap();
                        edges.push(Edge { src, dst, op });
                    }
                } else {
                    for _ in 0..2 {
                        let src = rng.gen_range(0..dst);
                        let op = *alphabet.choose(&mut rng).unwrap();
                        edges.push(Edge { src, dst, op });
                    }
                }
            }
            Genome::Cell(CellGenome {
                space,
                nodes: cfg.nodes,
                stem_channels: cfg.stem_channels,
                stack_depth: cfg.stack_depth,
                edges,
            })
        }
    }
}

/// Changes the label of exactly one cell edge, or moves exactly one
/// transformer field one rung along its ladder.
pub fn mutate_operation(g: &Genome, seed: u64) -> Result<Genome> {
    match g {
        Genome::Cell(c) => mutate_operation_in(c, c.alphabet(), seed).map(Genome::Cell),
        Genome::Transformer(t) => {
            mutate_transformer(t, &TransformerBounds::default(), seed).map(Genome::Transformer)
        }
    }
}

/// Operation mutation restricted to `alphabet`. Edge positions whose label
/// cannot change are never drawn.
pub fn mutate_operation_in(g: &CellGenome, alphabet: &[OpLabel], seed: u64) -> Result<CellGenome> {
    let mut rng = rng_from(seed);
    let loci: Vec<usize> = (0..g.edges.len())
        .filter(|&i| alphabet.iter().any(|&op| op != g.edges[i].op))
        .collect();
    let &locus = loci.choose(&mut rng).ok_or(GenomeError::NoOperationFreedom)?;
    let current = g.edges[locus].op;
    let choices: Vec<OpLabel> = alphabet.iter().copied().filter(|&op| op != current).collect();
    let mut child = g.clone();
    child.edges[locus].op = *choices.choose(&mut rng).unwrap();
    Ok(child)
}

pub fn mutate_transformer(
    g: &TransformerGenome,
    bounds: &TransformerBounds,
    seed: u64,
) -> Result<TransformerGenome> {
    let mut rng = rng_from(seed);
    let fields = g.fields();
    let ladders = bounds.ladders();
    // Candidate (field, new value) moves that keep the genome valid.
    let mut moves = Vec::new();
    for (i, ladder) in ladders.iter().enumerate() {
        for v in neighbours(ladder, fields[i]) {
            let mut f = fields;
            f[i] = v;
            if TransformerGenome::from_fields(f).validate().is_ok() {
                moves.push((i, v));
            }
        }
    }
    let &(i, v) = moves.choose(&mut rng).ok_or(GenomeError::NoOperationFreedom)?;
    let mut f = fields;
    f[i] = v;
    Ok(TransformerGenome::from_fields(f))
}

/// Adjacent ladder rungs of `value` (the nearest rung on each side when the
/// value is off the ladder).
fn neighbours(ladder: &[usize], value: usize) -> Vec<usize> {
    let below = ladder.iter().rev().find(|&&v| v < value);
    let above = ladder.iter().find(|&&v| v > value);
    below.into_iter().chain(above).copied().collect()
}

/// Rewires the source of exactly one edge to a different earlier node.
pub fn mutate_connectivity(g: &CellGenome, seed: u64) -> Result<CellGenome> {
    let mut rng = rng_from(seed);
    let loci: Vec<usize> = (0..g.edges.len()).filter(|&i| g.edges[i].dst >= 2).collect();
    let &locus = loci.choose(&mut rng).ok_or(GenomeError::NoConnectivityFreedom)?;
    let e = g.edges[locus];
    let sources: Vec<usize> = (0..e.dst).filter(|&s| s != e.src).collect();
    let mut child = g.clone();
    child.edges[locus].src = *sources.choose(&mut rng).unwrap();
    Ok(child)
}

/// Position-wise uniform crossover.
pub fn crossover(a: &Genome, b: &Genome, seed: u64) -> Result<Genome> {
    if a.space() != b.space() {
        return Err(GenomeError::SpaceMismatch(a.space(), b.space()));
    }
    let mut rng = rng_from(seed);
    match (a, b) {
        (Genome::Cell(a), Genome::Cell(b)) => {
            let same_shape = a.nodes == b.nodes
                && a.stem_channels == b.stem_channels
                && a.stack_depth == b.stack_depth
                && a.edges.len() == b.edges.len()
                && a.edges.iter().zip(&b.edges).all(|(x, y)| x.dst == y.dst);
            if !same_shape {
                return Err(GenomeError::ShapeMismatch(
                    "cells differ in node count, skeleton or edge layout".into(),
                ));
            }
            let mut child = a.clone();
            for (slot, eb) in child.edges.iter_mut().zip(&b.edges) {
                if rng.gen_bool(0.5) {
                    *slot = *eb;
                }
            }
            Ok(Genome::Cell(child))
        }
        (Genome::Transformer(a), Genome::Transformer(b)) => {
            let (fa, fb) = (a.fields(), b.fields());
            let mut f = fa;
            for i in 0..f.len() {
                if rng.gen_bool(0.5) {
                    f[i] = fb[i];
                }
            }
            let child = TransformerGenome::from_fields(f);
            child.validate()?;
            Ok(Genome::Transformer(child))
        }
        _ => unreachable!("space ids agree"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn nb201() -> CellGenome {
        match random_genome(SpaceId::Nb201, 7) {
            Genome::Cell(c) => c,
            _ => unreachable!(),
        }
    }

    #[test]
    fn random_genome_is_deterministic() {
        for space in SpaceId::ALL {
            assert_eq!(random_genome(space, 7), random_genome(space, 7));
        }
    }

    #[test]
    fn random_genomes_are_valid_and_in_alphabet() {
        for seed in 0..200 {
            for space in SpaceId::ALL {
                let g = random_genome(space, seed);
                g.validate().unwrap();
                if let Genome::Cell(c) = &g {
                    if space == SpaceId::Nb201 {
                        assert_eq!(c.edges.len(), 6);
                        assert!(c.edges.iter().all(|e| OpLabel::NB201.contains(&e.op)));
                    }
                }
            }
        }
    }

    #[test]
    fn random_genomes_vary_with_seed() {
        for chunk in 0..100u64 {
            let distinct: HashSet<String> = (0..10)
                .map(|i| encode(&random_genome(SpaceId::Nb201, chunk * 10 + i)))
                .collect();
            assert!(distinct.len() >= 2);
        }
    }

    #[test]
    fn unknown_space_is_rejected() {
        let err = "NB101".parse::<SpaceId>().unwrap_err();
        assert!(err.to_string().contains("unknown space"));
    }

    #[test]
    fn operation_mutation_changes_one_edge() {
        let g = nb201();
        for seed in 0..100 {
            let m = mutate_operation_in(&g, g.alphabet(), seed).unwrap();
            let diff = g.edges.iter().zip(&m.edges).filter(|(a, b)| a != b).count();
            assert_eq!(diff, 1);
            assert!(g.edges.iter().zip(&m.edges).all(|(a, b)| a.src == b.src && a.dst == b.dst));
            m.validate().unwrap();
        }
    }

    #[test]
    fn single_label_alphabet_resamples_position() {
        let mut g = nb201();
        for e in g.edges.iter_mut() {
            e.op = OpLabel::Conv3x3;
        }
        g.edges[4].op = OpLabel::Skip;
        let only = [OpLabel::Conv3x3];
        for seed in 0..50 {
            let m = mutate_operation_in(&g, &only, seed).unwrap();
            assert_eq!(m.edges[4].op, OpLabel::Conv3x3);
            let diff = g.edges.iter().zip(&m.edges).filter(|(a, b)| a != b).count();
            assert_eq!(diff, 1);
        }
        g.edges[4].op = OpLabel::Conv3x3;
        assert_eq!(
            mutate_operation_in(&g, &only, 0).unwrap_err(),
            GenomeError::NoOperationFreedom
        );
    }

    #[test]
    fn transformer_mutation_moves_one_rung() {
        let bounds = TransformerBounds::default();
        let g = TransformerGenome::new(2, 4, 128, 256, 32, 1000).unwrap();
        for seed in 0..200 {
            let m = mutate_transformer(&g, &bounds, seed).unwrap();
            let (a, b) = (g.fields(), m.fields());
            let changed: Vec<usize> = (0..6).filter(|&i| a[i] != b[i]).collect();
            assert_eq!(changed.len(), 1);
            let i = changed[0];
            let ladder = bounds.ladders()[i];
            let pa = ladder.iter().position(|&v| v == a[i]).unwrap() as i64;
            let pb = ladder.iter().position(|&v| v == b[i]).unwrap() as i64;
            assert_eq!((pa - pb).abs(), 1);
            m.validate().unwrap();
        }
    }

    #[test]
    fn connectivity_mutation_rewires_one_source() {
        let g = nb201();
        for seed in 0..100 {
            let m = mutate_connectivity(&g, seed).unwrap();
            let diff: Vec<_> = g.edges.iter().zip(&m.edges).filter(|(a, b)| a != b).collect();
            assert_eq!(diff.len(), 1);
            let (a, b) = diff[0];
            assert_eq!((a.dst, a.op), (b.dst, b.op));
            assert_ne!(a.src, b.src);
            assert!(b.src < b.dst);
        }
    }

    #[test]
    fn connectivity_mutation_needs_freedom() {
        let g = CellGenome::new(
            SpaceId::Nb201,
            1,
            8,
            1,
            vec![Edge { src: 0, dst: 1, op: OpLabel::Conv3x3 }],
        )
        .unwrap();
        assert_eq!(
            mutate_connectivity(&g, 3).unwrap_err(),
            GenomeError::NoConnectivityFreedom
        );
    }

    #[test]
    fn crossover_of_identical_parents_is_identity() {
        for space in SpaceId::ALL {
            let g = random_genome(space, 11);
            assert_eq!(crossover(&g, &g, 5).unwrap(), g);
        }
    }

    #[test]
    fn crossover_rejects_mixed_spaces() {
        let a = random_genome(SpaceId::Nb201, 1);
        let b = random_genome(SpaceId::Transformer, 1);
        let err = crossover(&a, &b, 0).unwrap_err();
        assert!(err.to_string().contains("space mismatch"));
    }

    #[test]
    fn crossover_origin_frequency_is_balanced() {
        let mk = |op: OpLabel, src_shift: bool| {
            let mut edges = Vec::new();
            for dst in 1..=3 {
                for src in 0..dst {
                    let src = if src_shift && dst >= 2 { (src + 1) % dst } else { src };
                    edges.push(Edge { src, dst, op });
                }
            }
            Genome::Cell(CellGenome::new(SpaceId::Nb201, 3, 16, 5, edges).unwrap())
        };
        let a = mk(OpLabel::Conv3x3, false);
        let b = mk(OpLabel::Skip, true);
        let mut from_a = [0usize; 6];
        for seed in 0..1000 {
            let Genome::Cell(c) = crossover(&a, &b, seed).unwrap() else { unreachable!() };
            for (i, e) in c.edges.iter().enumerate() {
                if e.op == OpLabel::Conv3x3 {
                    from_a[i] += 1;
                }
            }
        }
        for count in from_a {
            let freq = count as f64 / 1000.0;
            assert!((0.45..=0.55).contains(&freq), "{freq}");
        }
    }
}
