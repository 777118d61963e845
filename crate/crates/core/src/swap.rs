//! Pattern-set cardinalities, the size regulariser and score reports.
//!
//! The sample-wise score Ψ counts distinct rows of the `V x S` sign matrix
//! (one row per activation site); the standard, value-wise score counts
//! distinct columns (one per input sample). Regularised variants multiply by
//! `f(Θ) = exp(-(Θ - μ)² / σ)` with Θ in millions of parameters.

use crate::engine::{ActivationRecord, EngineError, InputBatch, NetworkInstance};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

pub const SIGMA_MIN: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("empty activation matrix")]
    EmptyMatrix,
    #[error("degenerate sigma {0} (minimum {SIGMA_MIN})")]
    DegenerateSigma(f64),
    #[error("invalid regularisation parameters: {0}")]
    InvalidParams(String),
    #[error("regulariser is off")]
    RegulariserOff,
    #[error("no history")]
    NoHistory,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    SampleWise,
    ValueWise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternSet {
    pub orientation: Orientation,
    pub distinct_count: usize,
    /// S for sample-wise patterns, V for value-wise ones.
    pub row_length: usize,
}

/// Packs a sequence of {-1,0,1} values at two bits per entry
/// (0 -> 00, 1 -> 01, -1 -> 10).
fn pack_into(values: impl Iterator<Item = i8>, words: &mut [u64]) {
    words.fill(0);
    for (i, v) in values.enumerate() {
        let code = match v {
            0 => 0u64,
            1 => 1,
            _ => 2,
        };
        words[i / 32] |= code << (2 * (i % 32));
    }
}

/// Ψ: number of distinct per-site rows. Rows are bit-packed and inserted
/// into a hash set; slice keys compare in full on hash collision, so the
/// count is exact.
pub fn swap_score(a: &ActivationRecord) -> Result<PatternSet, ScoreError> {
    if a.is_empty() {
        return Err(ScoreError::EmptyMatrix);
    }
    let (v, s) = (a.sites(), a.samples());
    let words = s.div_ceil(32);
    let distinct_count = if words == 1 {
        let mut set = HashSet::with_capacity(v.min(1 << 16));
        let mut w = [0u64];
        for site in 0..v {
            pack_into(a.row(site).iter().copied(), &mut w);
            set.insert(w[0]);
        }
        set.len()
    } else {
        let mut packed = vec![0u64; v * words];
        for (site, chunk) in packed.chunks_mut(words).enumerate() {
            pack_into(a.row(site).iter().copied(), chunk);
        }
        packed.chunks(words).collect::<HashSet<&[u64]>>().len()
    };
    Ok(PatternSet {
        orientation: Orientation::SampleWise,
        distinct_count,
        row_length: s,
    })
}

/// Standard activation-pattern score: number of distinct per-sample columns.
pub fn standard_pattern_score(a: &ActivationRecord) -> Result<PatternSet, ScoreError> {
    if a.is_empty() {
        return Err(ScoreError::EmptyMatrix);
    }
    let (v, s) = (a.sites(), a.samples());
    let words = v.div_ceil(32);
    let mut columns = vec![0u64; s * words];
    for site in 0..v {
        let (word, shift) = (site / 32, 2 * (site % 32));
        for (sample, &x) in a.row(site).iter().enumerate() {
            let code = match x {
                0 => 0u64,
                1 => 1,
                _ => 2,
            };
            columns[sample * words + word] |= code << shift;
        }
    }
    let distinct_count = columns.chunks(words).collect::<HashSet<&[u64]>>().len();
    Ok(PatternSet {
        orientation: Orientation::ValueWise,
        distinct_count,
        row_length: v,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegMode {
    Static,
    Adaptive,
    #[default]
    Off,
}

impl std::str::FromStr for RegMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "static" => Ok(RegMode::Static),
            "adaptive" => Ok(RegMode::Adaptive),
            "off" => Ok(RegMode::Off),
            _ => Err(format!("unknown regularisation mode `{s}` (static|adaptive|off)")),
        }
    }
}

impl std::fmt::Display for RegMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RegMode::Static => "static",
            RegMode::Adaptive => "adaptive",
            RegMode::Off => "off",
        })
    }
}

/// μ and σ of the size regulariser, both in millions of parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularisationParams {
    pub mu: f64,
    pub sigma: f64,
    pub mode: RegMode,
}

impl Default for RegularisationParams {
    fn default() -> Self {
        RegularisationParams {
            mu: 1.0,
            sigma: 1.0,
            mode: RegMode::Off,
        }
    }
}

impl RegularisationParams {
    pub fn new(mu: f64, sigma: f64, mode: RegMode) -> Result<Self, ScoreError> {
        let p = RegularisationParams { mu, sigma, mode };
        p.validate()?;
        Ok(p)
    }

    pub fn off() -> Self {
        RegularisationParams::default()
    }

    pub fn validate(&self) -> Result<(), ScoreError> {
        if self.sigma.is_nan() || self.sigma < SIGMA_MIN {
            return Err(ScoreError::DegenerateSigma(self.sigma));
        }
        if self.mu.is_nan() || self.mu < 0.0 || !self.mu.is_finite() || !self.sigma.is_finite() {
            return Err(ScoreError::InvalidParams(format!("mu={} sigma={}", self.mu, self.sigma)));
        }
        Ok(())
    }

    /// f(Θ), or 1 when the regulariser is off.
    pub fn factor(&self, theta_m: f64) -> Result<f64, ScoreError> {
        match self.mode {
            RegMode::Off => Ok(1.0),
            _ => regulariser(theta_m, self),
        }
    }
}

/// `exp(-(Θ - μ)² / σ)`.
pub fn regulariser(theta_m: f64, p: &RegularisationParams) -> Result<f64, ScoreError> {
    if p.mode == RegMode::Off {
        return Err(ScoreError::RegulariserOff);
    }
    p.validate()?;
    let d = theta_m - p.mu;
    Ok((-(d * d) / p.sigma).exp())
}

/// Ψ′ = Ψ · f(Θ); with the regulariser off Ψ′ = Ψ.
pub fn regularised_swap(psi: u64, theta_m: f64, p: &RegularisationParams) -> Result<f64, ScoreError> {
    Ok(psi as f64 * p.factor(theta_m)?)
}

/// μ ← mean(history), σ ← max(σ_min, sample standard deviation).
pub fn adaptive_update(history: &[f64], p: &RegularisationParams) -> Result<RegularisationParams, ScoreError> {
    if history.is_empty() {
        return Err(ScoreError::NoHistory);
    }
    let n = history.len() as f64;
    let mu = history.iter().sum::<f64>() / n;
    let std = if history.len() < 2 {
        0.0
    } else {
        (history.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(RegularisationParams {
        mu,
        sigma: std.max(SIGMA_MIN),
        mode: p.mode,
    })
}

/// Every metric of one network on one batch. Serialises as one JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub genome: String,
    pub seed: u64,
    #[serde(rename = "S")]
    pub samples: usize,
    #[serde(rename = "V")]
    pub sites: usize,
    pub swap: u64,
    pub reg_swap: f64,
    pub standard: u64,
    pub params_m: f64,
    pub flops: u64,
    pub f_theta: f64,
    pub reg_params: f64,
    pub reg_flops: f64,
    pub batch: String,
}

impl ScoreReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serialises")
    }
}

/// One forward pass, then every metric from the same activation record.
pub fn score_all(
    n: &NetworkInstance,
    b: &InputBatch,
    p: &RegularisationParams,
) -> Result<ScoreReport, ScoreError> {
    let record = n.forward_capture(b)?;
    let swap = swap_score(&record)?.distinct_count as u64;
    let standard = standard_pattern_score(&record)?.distinct_count as u64;
    let params_m = n.params_m();
    let flops = n.count_flops(&b.dims)?;
    let f_theta = p.factor(params_m)?;
    Ok(ScoreReport {
        genome: n.architecture().describe(),
        seed: n.init_seed(),
        samples: record.samples(),
        sites: record.sites(),
        swap,
        reg_swap: swap as f64 * f_theta,
        standard,
        params_m,
        flops,
        f_theta,
        reg_params: params_m * f_theta,
        reg_flops: flops as f64 * f_theta,
        batch: b.descriptor.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(v: usize, s: usize, m: Vec<i8>) -> ActivationRecord {
        ActivationRecord::from_matrix(v, s, m).unwrap()
    }

    #[test]
    fn identical_rows_score_one() {
        let r = record(4, 3, [1, 0, 1].repeat(4));
        assert_eq!(swap_score(&r).unwrap().distinct_count, 1);
    }

    #[test]
    fn four_rows_three_distinct() {
        let r = record(4, 3, vec![1, 0, 1, 0, 0, 1, 1, 0, 1, 1, 1, 1]);
        let p = swap_score(&r).unwrap();
        assert_eq!(p.distinct_count, 3);
        assert_eq!(p.orientation, Orientation::SampleWise);
        assert_eq!(p.row_length, 3);
    }

    #[test]
    fn ternary_values_are_distinguished() {
        // rows (1,-1) (1,0) (1,1) (-1,-1) (0,0)
        let r = record(5, 2, vec![1, -1, 1, 0, 1, 1, -1, -1, 0, 0]);
        assert_eq!(swap_score(&r).unwrap().distinct_count, 5);
        // columns (1,1,1,-1,0) and (-1,0,1,-1,0)
        assert_eq!(standard_pattern_score(&r).unwrap().distinct_count, 2);
    }

    #[test]
    fn wide_rows_use_multiword_keys() {
        // 40 samples: rows differ only in sample 35
        let mut m = vec![0i8; 3 * 40];
        m[35] = 1;
        m[80 + 35] = 1;
        let r = record(3, 40, m);
        assert_eq!(swap_score(&r).unwrap().distinct_count, 2);
    }

    #[test]
    fn identical_samples_give_standard_score_one() {
        let r = record(3, 4, vec![1, 1, 1, 1, 0, 0, 0, 0, 1, 1, 1, 1]);
        assert_eq!(standard_pattern_score(&r).unwrap().distinct_count, 1);
    }

    #[test]
    fn empty_matrix_is_an_error() {
        let r = record(0, 4, vec![]);
        assert!(matches!(swap_score(&r), Err(ScoreError::EmptyMatrix)));
        assert!(matches!(standard_pattern_score(&r), Err(ScoreError::EmptyMatrix)));
    }

    #[test]
    fn regulariser_values() {
        let p = RegularisationParams::new(1.2, 0.8, RegMode::Static).unwrap();
        assert_eq!(regulariser(1.2, &p).unwrap(), 1.0);
        let e = regulariser(1.2 + 0.8f64.sqrt(), &p).unwrap();
        assert!((e - (-1.0f64).exp()).abs() < 1e-12);
        assert!((e - 0.367879).abs() < 1e-6);
        for d in [0.1, 0.5, 3.0] {
            assert_eq!(regulariser(1.2 + d, &p).unwrap(), regulariser(1.2 - d, &p).unwrap());
        }
    }

    #[test]
    fn degenerate_sigma_is_rejected() {
        let err = RegularisationParams::new(1.0, 1e-4, RegMode::Static).unwrap_err();
        assert!(err.to_string().contains("degenerate sigma"));
        let p = RegularisationParams {
            mu: 1.0,
            sigma: 0.0,
            mode: RegMode::Static,
        };
        assert!(matches!(regulariser(1.0, &p), Err(ScoreError::DegenerateSigma(_))));
    }

    #[test]
    fn regularised_swap_values() {
        let p = RegularisationParams::new(2.0, 1.0, RegMode::Static).unwrap();
        assert_eq!(regularised_swap(1000, 2.0, &p).unwrap(), 1000.0);
        assert_eq!(regularised_swap(0, 3.7, &p).unwrap(), 0.0);
        assert_eq!(regularised_swap(17, 9.0, &RegularisationParams::off()).unwrap(), 17.0);
    }

    #[test]
    fn regularised_swap_peaks_at_mu() {
        let p = RegularisationParams::new(1.5, 0.7, RegMode::Static).unwrap();
        let grid: Vec<f64> = (0..=300).map(|i| i as f64 * 0.01).collect();
        let vals: Vec<f64> = grid.iter().map(|&t| regularised_swap(500, t, &p).unwrap()).collect();
        let best = (0..grid.len()).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
        assert!((grid[best] - 1.5).abs() < 1e-12);
        for w in grid.windows(2).zip(vals.windows(2)) {
            let ((t0, t1), (v0, v1)) = ((w.0[0], w.0[1]), (w.1[0], w.1[1]));
            if (t1 - 1.5).abs() > (t0 - 1.5).abs() + 1e-12 {
                assert!(v1 < v0);
            }
        }
    }

    #[test]
    fn adaptive_update_examples() {
        let p = RegularisationParams {
            mu: 0.0,
            sigma: 1.0,
            mode: RegMode::Adaptive,
        };
        let one = adaptive_update(&[2.0], &p).unwrap();
        assert_eq!((one.mu, one.sigma), (2.0, SIGMA_MIN));
        let three = adaptive_update(&[1.0, 2.0, 3.0], &p).unwrap();
        assert_eq!((three.mu, three.sigma), (2.0, 1.0));
        let flat = adaptive_update(&[0.4; 6], &p).unwrap();
        assert_eq!(flat.sigma, SIGMA_MIN);
        assert!(matches!(adaptive_update(&[], &p), Err(ScoreError::NoHistory)));
    }

    #[test]
    fn report_field_names() {
        let r = ScoreReport {
            genome: "g".into(),
            seed: 1,
            samples: 8,
            sites: 100,
            swap: 50,
            reg_swap: 25.0,
            standard: 8,
            params_m: 0.5,
            flops: 1000,
            f_theta: 0.5,
            reg_params: 0.25,
            reg_flops: 500.0,
            batch: "noise".into(),
        };
        let v: serde_json::Value = serde_json::from_str(&r.to_json_line()).unwrap();
        for key in ["genome", "seed", "S", "V", "swap", "reg_swap", "standard", "params_m", "flops", "f_theta"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(!r.to_json_line().contains('\n'));
    }
}
