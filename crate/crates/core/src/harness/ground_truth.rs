//! Ground-truth accuracy tables: CSV with header `arch_id,encoding,accuracy`.

use super::HarnessError;
use crate::netgraph::Genome;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRow {
    pub arch_id: String,
    pub encoding: String,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruthTable {
    pub rows: Vec<GroundTruthRow>,
}

/// A row whose encoding could not be decoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRow {
    pub arch_id: String,
    pub reason: String,
}

impl GroundTruthTable {
    pub fn new(rows: Vec<GroundTruthRow>) -> Result<Self, HarnessError> {
        let t = GroundTruthTable { rows };
        t.validate()?;
        Ok(t)
    }

    /// Unique ids and finite accuracies. Encodings are checked by [`Self::decoded`],
    /// which skips bad rows instead of failing.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut seen = HashSet::new();
        for r in &self.rows {
            if !seen.insert(r.arch_id.as_str()) {
                return Err(HarnessError::BadTable(format!("duplicate arch_id `{}`", r.arch_id)));
            }
            if !r.accuracy.is_finite() {
                return Err(HarnessError::BadTable(format!("non-finite accuracy for `{}`", r.arch_id)));
            }
        }
        Ok(())
    }

    pub fn from_reader(r: impl Read) -> Result<Self, HarnessError> {
        let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let rows = rd
            .deserialize()
            .collect::<Result<Vec<GroundTruthRow>, _>>()
            .map_err(|e| HarnessError::BadTable(e.to_string()))?;
        GroundTruthTable::new(rows)
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let f = std::fs::File::open(path)
            .map_err(|e| HarnessError::BadTable(format!("{}: {e}", path.display())))?;
        GroundTruthTable::from_reader(f)
    }

    pub fn write(&self, w: impl Write) -> Result<(), HarnessError> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r).map_err(|e| HarnessError::BadTable(e.to_string()))?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Rows sorted by `arch_id` with parsed genomes, plus the rows that failed to parse.
    pub fn decoded(&self) -> (Vec<(GroundTruthRow, Genome)>, Vec<SkippedRow>) {
        let mut rows: Vec<&GroundTruthRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| a.arch_id.cmp(&b.arch_id));
        let (mut ok, mut skipped) = (Vec::new(), Vec::new());
        for r in rows {
            match r.encoding.parse::<Genome>() {
                Ok(g) => ok.push((r.clone(), g)),
                Err(e) => {
                    log::warn!("skipping `{}`: {e}", r.arch_id);
                    skipped.push(SkippedRow {
                        arch_id: r.arch_id.clone(),
                        reason: e.to_string(),
                    });
                }
            }
        }
        (ok, skipped)
    }
}
