//! Batch-size and input-dimension sweeps.
//!
//! Without ground truth each sweep emits per-network metric values (Ψ,
//! standard score, site count V); with ground truth it also emits per-seed
//! Spearman ρ for every metric. Summaries are mean ± standard error per
//! (metric, setting).

use super::correlate::{correlate_scores, correlation_long_rows, score_with_seed, EvalConfig, ScoredRow};
use super::ground_truth::{GroundTruthTable, SkippedRow};
use super::stats::mean_and_std_err;
use super::{HarnessError, LongRow};
use crate::engine::BatchKind;
use crate::netgraph::{random_genome_with, Genome, SpaceConfig, SpaceId};
use crate::rng::derive_key;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub struct AblationConfig {
    pub space: SpaceConfig,
    /// Number of random networks when no ground truth is supplied.
    pub n_nets: usize,
    pub net_seed: u64,
    pub eval: EvalConfig,
    pub ground_truth: Option<GroundTruthTable>,
}

impl AblationConfig {
    pub fn new(space: SpaceConfig, n_nets: usize, eval: EvalConfig) -> Self {
        AblationConfig {
            space,
            n_nets,
            net_seed: 0,
            eval,
            ground_truth: None,
        }
    }

    /// `(arch_id, accuracy, genome)` in `arch_id` order.
    fn architectures(&self) -> Result<(Vec<(String, f64, Genome)>, Vec<SkippedRow>), HarnessError> {
        match &self.ground_truth {
            Some(t) => {
                let (rows, skipped) = t.decoded();
                let archs = rows.into_iter().map(|(r, g)| (r.arch_id, r.accuracy, g)).collect();
                Ok((archs, skipped))
            }
            None => {
                if self.n_nets == 0 {
                    return Err(HarnessError::Config("n_nets must be positive".into()));
                }
                self.space.validate()?;
                let archs = (0..self.n_nets)
                    .map(|i| {
                        let g = random_genome_with(&self.space, derive_key(&[self.net_seed, i as u64]));
                        (format!("net{i:04}"), f64::NAN, g)
                    })
                    .collect();
                Ok((archs, Vec::new()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub metric: String,
    pub setting: String,
    pub mean: f64,
    pub std_err: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AblationTable {
    pub long: Vec<LongRow>,
    pub summary: Vec<SummaryRow>,
    pub skipped: Vec<SkippedRow>,
    /// Metrics whose correlation was undefined, as `(setting, reason)`.
    pub undefined: Vec<(String, String)>,
}

impl AblationTable {
    pub fn summary_for(&self, metric: &str) -> Vec<&SummaryRow> {
        self.summary.iter().filter(|r| r.metric == metric).collect()
    }
}

/// Runs one batch configuration per setting over every architecture and seed.
fn sweep(
    cfg: &AblationConfig,
    settings: Vec<(String, crate::engine::BatchSpec)>,
) -> Result<AblationTable, HarnessError> {
    cfg.eval.validate()?;
    let (archs, skipped) = cfg.architectures()?;
    let mut table = AblationTable {
        skipped,
        ..Default::default()
    };
    for (setting, batch) in &settings {
        let mut scores = Vec::new();
        for &seed in &cfg.eval.seeds {
            let reports = archs
                .par_iter()
                .map(|(_, _, g)| score_with_seed(g, batch, seed, &cfg.eval.reg, cfg.eval.norm))
                .collect::<Result<Vec<_>, _>>()?;
            for ((id, acc, _), report) in archs.iter().zip(reports) {
                for (metric, value) in [
                    ("swap", report.swap as f64),
                    ("standard", report.standard as f64),
                    ("sites", report.sites as f64),
                ] {
                    table.long.push(LongRow {
                        metric: metric.into(),
                        setting: setting.clone(),
                        seed,
                        arch_id: id.clone(),
                        value,
                    });
                }
                scores.push(ScoredRow {
                    arch_id: id.clone(),
                    accuracy: *acc,
                    seed,
                    report,
                });
            }
        }
        if cfg.ground_truth.is_some() {
            let outcomes = correlate_scores(&scores, &cfg.eval.seeds);
            for o in &outcomes {
                if let super::correlate::MetricOutcome::Undefined { metric, seed, reason } = o {
                    table
                        .undefined
                        .push((setting.clone(), format!("{metric} (seed {seed}): {reason}")));
                }
            }
            table.long.extend(correlation_long_rows(&outcomes, setting));
        }
    }
    table.summary = summarise(&table.long, &settings.iter().map(|(s, _)| s.clone()).collect::<Vec<_>>());
    Ok(table)
}

fn summarise(long: &[LongRow], settings: &[String]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<&str, BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    for r in long {
        groups.entry(&r.metric).or_default().entry(&r.setting).or_default().push(r.value);
    }
    let mut out = Vec::new();
    for (metric, by_setting) in groups {
        // keep the caller's setting order
        for setting in settings {
            if let Some(values) = by_setting.get(setting.as_str()) {
                let (mean, std_err) = mean_and_std_err(values);
                out.push(SummaryRow {
                    metric: metric.to_string(),
                    setting: setting.clone(),
                    mean,
                    std_err,
                    count: values.len(),
                });
            }
        }
    }
    out
}

/// Sweeps the number of samples S. Batches for different sizes are nested
/// prefixes of one another.
pub fn ablate_batch_size(cfg: &AblationConfig, sizes: &[usize]) -> Result<AblationTable, HarnessError> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(HarnessError::Config("batch sizes must be positive".into()));
    }
    let settings = sizes
        .iter()
        .map(|&s| {
            let batch = crate::engine::BatchSpec {
                samples: s,
                ..cfg.eval.batch.clone()
            };
            (s.to_string(), batch)
        })
        .collect();
    sweep(cfg, settings)
}

/// Sweeps the spatial input size of cell networks. Image batches are centre
/// crops of the source file; noise batches are generated at each size.
pub fn ablate_input_dims(
    cfg: &AblationConfig,
    dims: &[(usize, usize)],
    kind: BatchKind,
) -> Result<AblationTable, HarnessError> {
    if cfg.ground_truth.is_none() && cfg.space.space == SpaceId::Transformer {
        return Err(HarnessError::Config("input-dimension sweeps apply to cell spaces".into()));
    }
    if dims.is_empty() || dims.iter().any(|&(h, w)| h == 0 || w == 0) {
        return Err(HarnessError::Config("input dimensions must be positive".into()));
    }
    if kind == BatchKind::Tokens {
        return Err(HarnessError::Config("input-dimension sweeps take image or noise batches".into()));
    }
    if kind == BatchKind::Image && cfg.eval.batch.path.is_none() {
        return Err(HarnessError::Config("image sweeps need a source image file".into()));
    }
    let settings = dims
        .iter()
        .map(|&(h, w)| {
            let batch = crate::engine::BatchSpec {
                kind,
                height: h,
                width: w,
                ..cfg.eval.batch.clone()
            };
            (format!("{}x{h}x{w}", crate::engine::INPUT_CHANNELS), batch)
        })
        .collect();
    sweep(cfg, settings)
}
