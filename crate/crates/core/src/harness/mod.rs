//! Evaluation harness: rank correlation against ground truth, ablation
//! sweeps and brute-force verification of the pattern counts.

pub mod ablate;
pub mod correlate;
pub mod ground_truth;
pub mod oracle;
pub mod stats;

pub use ablate::{ablate_batch_size, ablate_input_dims, AblationConfig, AblationTable, SummaryRow};
pub use correlate::{correlate_metrics, CorrelationReport, CorrelationRun, EvalConfig, Metric, MetricOutcome};
pub use ground_truth::{GroundTruthRow, GroundTruthTable};
pub use oracle::{oracle_check, oracle_check_with, OracleConfig, OracleReport, Scorers};
pub use stats::{average_ranks, spearman};

use crate::engine::EngineError;
use crate::netgraph::GenomeError;
use crate::swap::ScoreError;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("undefined correlation")]
    UndefinedCorrelation,
    #[error("bad ground-truth table: {0}")]
    BadTable(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One plot-ready value. `arch_id` is empty for aggregate values such as ρ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRow {
    pub metric: String,
    pub setting: String,
    pub seed: u64,
    pub arch_id: String,
    pub value: f64,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::Io(e.into()))?;
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in rows {
        writeln!(w, "{}", serde_json::to_string(r).expect("row serialises"))?;
    }
    w.flush()?;
    Ok(())
}
