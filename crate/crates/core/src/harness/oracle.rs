//! Brute-force verification of the hashed pattern counts.
//!
//! Small random networks (V ≤ `v_cap`) are scored by the fast scorers and by
//! naive pairwise deduplication; any disagreement is reported with the
//! genome, seed and batch needed to reproduce it.

use super::HarnessError;
use crate::engine::{instantiate, ActivationRecord, BatchSpec, InputBatch, NetworkInstance, Precision};
use crate::netgraph::{random_genome_with, Genome, SpaceConfig, SpaceId, TransformerBounds};
use crate::rng::derive_key;
use crate::swap::{standard_pattern_score, swap_score};
use serde::{Deserialize, Serialize};

/// Distinct rows, counted by comparing each row with every earlier one.
pub fn naive_row_count(a: &ActivationRecord) -> usize {
    (0..a.sites())
        .filter(|&i| (0..i).all(|j| a.row(j) != a.row(i)))
        .count()
}

/// Distinct columns, counted by comparing each column with every earlier one.
pub fn naive_column_count(a: &ActivationRecord) -> usize {
    let same = |x: usize, y: usize| (0..a.sites()).all(|v| a.value(v, x) == a.value(v, y));
    (0..a.samples()).filter(|&i| (0..i).all(|j| !same(i, j))).count()
}

/// The pair of scorers under test.
pub struct Scorers<'a> {
    pub swap: &'a (dyn Fn(&ActivationRecord) -> usize + Sync),
    pub standard: &'a (dyn Fn(&ActivationRecord) -> usize + Sync),
}

fn fast_swap(a: &ActivationRecord) -> usize {
    swap_score(a).map(|p| p.distinct_count).unwrap_or(0)
}

fn fast_standard(a: &ActivationRecord) -> usize {
    standard_pattern_score(a).map(|p| p.distinct_count).unwrap_or(0)
}

impl Default for Scorers<'static> {
    fn default() -> Self {
        Scorers {
            swap: &fast_swap,
            standard: &fast_standard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub space: SpaceId,
    pub n_nets: usize,
    pub v_cap: usize,
    pub sizes: Vec<usize>,
    pub seed: u64,
}

impl OracleConfig {
    pub fn new(space: SpaceId, n_nets: usize, v_cap: usize) -> Self {
        OracleConfig {
            space,
            n_nets,
            v_cap,
            sizes: vec![4, 8, 16],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub metric: String,
    pub genome: String,
    pub init_seed: u64,
    pub batch: String,
    pub samples: usize,
    pub fast: usize,
    pub naive: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub nets: usize,
    pub comparisons: usize,
    pub max_sites: usize,
    pub vacuous: bool,
    pub passed: bool,
    pub warnings: Vec<String>,
    pub mismatches: Vec<Mismatch>,
}

pub const MAX_V_CAP: usize = 5000;
const SHAPE_ATTEMPTS: usize = 20;

/// Tiny network shapes for the brute-force comparison.
fn tiny_space(space: SpaceId, key: u64) -> SpaceConfig {
    let pick = |i: u64, options: &[usize]| options[(crate::rng::stream_u64(key, i) % options.len() as u64) as usize];
    match space {
        SpaceId::Transformer => {
            let mut cfg = SpaceConfig::new(space);
            cfg.transformer = TransformerBounds {
                layers: vec![1, 2],
                heads: vec![1, 2],
                d_model: vec![8, 16],
                d_ff: vec![8, 16, 32],
                seq_len: vec![pick(0, &[2, 4, 8])],
                vocab: vec![32],
            };
            cfg
        }
        _ => SpaceConfig::new(space).with_shape(pick(0, &[1, 2, 4]), 1),
    }
}

const INPUT_SIDES: [usize; 6] = [16, 12, 8, 6, 4, 2];

/// Draws a network and an input side length whose site count fits under the cap.
fn draw_net(cfg: &OracleConfig, net: usize) -> Result<Option<(NetworkInstance, usize, usize)>, HarnessError> {
    for attempt in 0..SHAPE_ATTEMPTS {
        let key = derive_key(&[cfg.seed, net as u64, attempt as u64]);
        let g: Genome = random_genome_with(&tiny_space(cfg.space, key), key);
        let instance = instantiate(&g, key)?;
        let sides: &[usize] = if cfg.space == SpaceId::Transformer { &[0] } else { &INPUT_SIDES };
        for &side in sides {
            let b = BatchSpec::noise(2, side, side, key).materialise(instance.architecture())?;
            let v = instance.forward_capture_with(&b, Precision::F64)?.sites();
            if v > 0 && v <= cfg.v_cap {
                return Ok(Some((instance, side, v)));
            }
        }
    }
    Ok(None)
}

pub fn oracle_check(cfg: &OracleConfig) -> Result<OracleReport, HarnessError> {
    oracle_check_with(cfg, &Scorers::default())
}

/// Like [`oracle_check`] with substitutable fast scorers.
pub fn oracle_check_with(cfg: &OracleConfig, scorers: &Scorers<'_>) -> Result<OracleReport, HarnessError> {
    if cfg.v_cap > MAX_V_CAP {
        return Err(HarnessError::Config(format!("v_cap {} exceeds {MAX_V_CAP}", cfg.v_cap)));
    }
    if cfg.sizes.is_empty() || cfg.sizes.contains(&0) {
        return Err(HarnessError::Config("sample sizes must be positive".into()));
    }
    let mut report = OracleReport {
        nets: 0,
        comparisons: 0,
        max_sites: 0,
        vacuous: false,
        passed: true,
        warnings: Vec::new(),
        mismatches: Vec::new(),
    };
    if cfg.v_cap == 0 || cfg.n_nets == 0 {
        report.vacuous = true;
        report.warnings.push("no networks can be checked; pass is vacuous".into());
        log::warn!("oracle check is vacuous (v_cap={}, n_nets={})", cfg.v_cap, cfg.n_nets);
        return Ok(report);
    }
    for net in 0..cfg.n_nets {
        let Some((instance, side, v)) = draw_net(cfg, net)? else {
            report
                .warnings
                .push(format!("net {net}: no small enough network found under v_cap={}", cfg.v_cap));
            continue;
        };
        report.nets += 1;
        report.max_sites = report.max_sites.max(v);
        for &s in &cfg.sizes {
            let seed = derive_key(&[cfg.seed, net as u64, s as u64]);
            let batch: InputBatch = BatchSpec::noise(s, side, side, seed).materialise(instance.architecture())?;
            let record = instance.forward_capture_with(&batch, Precision::F64)?;
            let checks = [
                ("swap", (scorers.swap)(&record), naive_row_count(&record)),
                ("standard", (scorers.standard)(&record), naive_column_count(&record)),
            ];
            for (metric, fast, naive) in checks {
                report.comparisons += 1;
                if fast != naive {
                    report.mismatches.push(Mismatch {
                        metric: metric.into(),
                        genome: instance.architecture().describe(),
                        init_seed: instance.init_seed(),
                        batch: batch.descriptor.clone(),
                        samples: s,
                        fast,
                        naive,
                    });
                }
            }
        }
    }
    if report.nets == 0 {
        report.vacuous = true;
        report.warnings.push("no networks fitted under the cap; pass is vacuous".into());
    }
    report.passed = report.mismatches.is_empty();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn naive_counts() {
        let r = ActivationRecord::from_matrix(4, 3, vec![1, 0, 1, 0, 0, 1, 1, 0, 1, 1, 1, 1]).unwrap();
        assert_eq!(naive_row_count(&r), 3);
        assert_eq!(naive_column_count(&r), 3);
        let same = ActivationRecord::from_matrix(2, 3, vec![1, 1, 1, 0, 0, 0]).unwrap();
        assert_eq!(naive_column_count(&same), 1);
    }

    #[test]
    fn zero_cap_is_vacuous() {
        let r = oracle_check(&OracleConfig::new(SpaceId::Nb201, 5, 0)).unwrap();
        assert!(r.vacuous && r.passed);
        assert_eq!(r.nets, 0);
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn cap_above_limit_is_rejected() {
        assert!(oracle_check(&OracleConfig::new(SpaceId::Nb201, 1, 5001)).is_err());
    }
}
