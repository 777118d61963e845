//! Per-metric rank correlation against ground-truth accuracy, repeated over
//! several seeds.

use super::ground_truth::{GroundTruthTable, SkippedRow};
use super::stats::{mean_and_std_err, spearman};
use super::HarnessError;
use crate::engine::{instantiate_with, BatchSpec, NormMode};
use crate::netgraph::Genome;
use crate::swap::{score_all, RegularisationParams, ScoreReport};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Swap,
    RegSwap,
    Standard,
    Params,
    Flops,
    RegParams,
    RegFlops,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Swap,
        Metric::RegSwap,
        Metric::Standard,
        Metric::Params,
        Metric::Flops,
        Metric::RegParams,
        Metric::RegFlops,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Swap => "swap",
            Metric::RegSwap => "reg_swap",
            Metric::Standard => "standard",
            Metric::Params => "params",
            Metric::Flops => "flops",
            Metric::RegParams => "reg_params",
            Metric::RegFlops => "reg_flops",
        }
    }

    pub fn value(self, r: &ScoreReport) -> f64 {
        match self {
            Metric::Swap => r.swap as f64,
            Metric::RegSwap => r.reg_swap,
            Metric::Standard => r.standard as f64,
            Metric::Params => r.params_m,
            Metric::Flops => r.flops as f64,
            Metric::RegParams => r.reg_params,
            Metric::RegFlops => r.reg_flops,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, HarnessError> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown metric `{s}`")))
    }
}

/// How each seed is evaluated: the seed is used both as the weight-init seed
/// and as the batch seed (the latter matters for generated batches only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub batch: BatchSpec,
    pub seeds: Vec<u64>,
    pub reg: RegularisationParams,
    pub norm: NormMode,
}

impl EvalConfig {
    pub fn new(batch: BatchSpec, seeds: Vec<u64>) -> Self {
        EvalConfig {
            batch,
            seeds,
            reg: RegularisationParams::off(),
            norm: NormMode::BatchStats,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("at least one seed is required".into()));
        }
        if self.batch.samples == 0 {
            return Err(HarnessError::Config("batch needs at least one sample".into()));
        }
        Ok(())
    }
}

/// Scores `g` with the given seed as init and batch seed.
pub fn score_with_seed(
    g: &Genome,
    batch: &BatchSpec,
    seed: u64,
    reg: &RegularisationParams,
    norm: NormMode,
) -> Result<ScoreReport, HarnessError> {
    let net = instantiate_with(g, seed, norm)?;
    let spec = BatchSpec { seed, ..batch.clone() };
    let b = spec.materialise(net.architecture())?;
    Ok(score_all(&net, &b, reg)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub metric: Metric,
    pub n: usize,
    pub seeds: Vec<u64>,
    /// ρ for each seed, in `seeds` order.
    pub per_seed: Vec<f64>,
    pub mean_over_seeds: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MetricOutcome {
    Defined(CorrelationReport),
    /// The metric (or the accuracy column) is constant for at least one seed.
    Undefined { metric: Metric, seed: u64, reason: String },
}

impl MetricOutcome {
    pub fn metric(&self) -> Metric {
        match self {
            MetricOutcome::Defined(r) => r.metric,
            MetricOutcome::Undefined { metric, .. } => *metric,
        }
    }

    pub fn report(&self) -> Option<&CorrelationReport> {
        match self {
            MetricOutcome::Defined(r) => Some(r),
            MetricOutcome::Undefined { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRow {
    pub arch_id: String,
    pub accuracy: f64,
    pub seed: u64,
    pub report: ScoreReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationRun {
    pub outcomes: Vec<MetricOutcome>,
    /// Sorted by seed order, then `arch_id`.
    pub scores: Vec<ScoredRow>,
    pub skipped: Vec<SkippedRow>,
}

impl CorrelationRun {
    pub fn outcome(&self, m: Metric) -> Option<&MetricOutcome> {
        self.outcomes.iter().find(|o| o.metric() == m)
    }
}

/// Scores every decodable architecture once per seed and correlates each
/// metric with accuracy. Rows are processed in `arch_id` order, so the result
/// does not depend on the table's row order.
pub fn correlate_metrics(table: &GroundTruthTable, cfg: &EvalConfig) -> Result<CorrelationRun, HarnessError> {
    cfg.validate()?;
    table.validate()?;
    let (rows, skipped) = table.decoded();
    if rows.len() < 3 {
        return Err(HarnessError::TooFewPoints(rows.len()));
    }
    let mut scores = Vec::with_capacity(rows.len() * cfg.seeds.len());
    for &seed in &cfg.seeds {
        let reports = rows
            .par_iter()
            .map(|(_, g)| score_with_seed(g, &cfg.batch, seed, &cfg.reg, cfg.norm))
            .collect::<Result<Vec<_>, _>>()?;
        for ((row, _), report) in rows.iter().zip(reports) {
            scores.push(ScoredRow {
                arch_id: row.arch_id.clone(),
                accuracy: row.accuracy,
                seed,
                report,
            });
        }
    }
    let outcomes = correlate_scores(&scores, &cfg.seeds);
    Ok(CorrelationRun {
        outcomes,
        scores,
        skipped,
    })
}

/// Correlation step on already-scored rows; `scores` holds one block of rows
/// per seed, in the order of `seeds`.
pub fn correlate_scores(scores: &[ScoredRow], seeds: &[u64]) -> Vec<MetricOutcome> {
    Metric::ALL
        .into_iter()
        .map(|metric| {
            let mut per_seed = Vec::with_capacity(seeds.len());
            let mut n = 0;
            for &seed in seeds {
                let block: Vec<&ScoredRow> = scores.iter().filter(|r| r.seed == seed).collect();
                n = block.len();
                let xs: Vec<f64> = block.iter().map(|r| metric.value(&r.report)).collect();
                let ys: Vec<f64> = block.iter().map(|r| r.accuracy).collect();
                match spearman(&xs, &ys) {
                    Ok(rho) => per_seed.push(rho),
                    Err(e) => {
                        return MetricOutcome::Undefined {
                            metric,
                            seed,
                            reason: e.to_string(),
                        }
                    }
                }
            }
            let (mean_over_seeds, std_err) = mean_and_std_err(&per_seed);
            MetricOutcome::Defined(CorrelationReport {
                metric,
                n,
                seeds: seeds.to_vec(),
                per_seed,
                mean_over_seeds,
                std_err,
            })
        })
        .collect()
}

/// Long-format rows `metric,setting,seed,value` for the per-seed ρ values.
pub fn correlation_long_rows(outcomes: &[MetricOutcome], setting: &str) -> Vec<super::LongRow> {
    outcomes
        .iter()
        .filter_map(MetricOutcome::report)
        .flat_map(|r| {
            r.seeds.iter().zip(&r.per_seed).map(move |(&seed, &rho)| super::LongRow {
                metric: format!("spearman_{}", r.metric),
                setting: setting.to_string(),
                seed,
                arch_id: String::new(),
                value: rho,
            })
        })
        .collect()
}
