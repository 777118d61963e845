//! Sign-level activation capture.

use super::tensor::Scalar;
use super::EngineError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Relu,
    Gelu,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSites {
    pub layer: String,
    pub sites: usize,
}

/// `V x S` matrix of Signum-transformed post-activation values, stored
/// site-major: row `v` holds site `v` across all `S` samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationRecord {
    sites: usize,
    samples: usize,
    matrix: Vec<i8>,
    per_layer_sites: Vec<LayerSites>,
    ternary: bool,
}

impl ActivationRecord {
    /// Builds a record from a site-major matrix. Used by tests and the
    /// oracle harness; the engine builds records through a [`Recorder`].
    pub fn from_matrix(sites: usize, samples: usize, matrix: Vec<i8>) -> Result<Self, EngineError> {
        if matrix.len() != sites * samples {
            return Err(EngineError::ShapeMismatch(format!(
                "matrix has {} entries, expected {sites} x {samples}",
                matrix.len()
            )));
        }
        if let Some(v) = matrix.iter().find(|v| !(-1..=1).contains(*v)) {
            return Err(EngineError::ShapeMismatch(format!("entry {v} outside {{-1,0,1}}")));
        }
        let ternary = matrix.contains(&-1);
        Ok(ActivationRecord {
            sites,
            samples,
            matrix,
            per_layer_sites: vec![LayerSites {
                layer: "matrix".into(),
                sites,
            }],
            ternary,
        })
    }

    /// V
    pub fn sites(&self) -> usize {
        self.sites
    }

    /// S
    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn matrix(&self) -> &[i8] {
        &self.matrix
    }

    pub fn row(&self, site: usize) -> &[i8] {
        &self.matrix[site * self.samples..(site + 1) * self.samples]
    }

    pub fn value(&self, site: usize, sample: usize) -> i8 {
        self.matrix[site * self.samples + sample]
    }

    pub fn per_layer_sites(&self) -> &[LayerSites] {
        &self.per_layer_sites
    }

    /// True when any GELU site was captured, i.e. entries range over {-1,0,1}.
    pub fn is_ternary(&self) -> bool {
        self.ternary
    }

    pub fn alphabet_size(&self) -> u32 {
        if self.ternary {
            3
        } else {
            2
        }
    }

    pub fn is_empty(&self) -> bool {
        self.sites == 0 || self.samples == 0
    }

    /// A record restricted to (and reordered by) the given sample columns.
    pub fn select_samples(&self, columns: &[usize]) -> ActivationRecord {
        let mut matrix = Vec::with_capacity(self.sites * columns.len());
        for v in 0..self.sites {
            let row = self.row(v);
            matrix.extend(columns.iter().map(|&c| row[c]));
        }
        ActivationRecord {
            sites: self.sites,
            samples: columns.len(),
            matrix,
            per_layer_sites: self.per_layer_sites.clone(),
            ternary: self.ternary,
        }
    }
}

/// Accumulates activation sites during one forward pass.
pub(crate) struct Recorder {
    samples: usize,
    matrix: Vec<i8>,
    layers: Vec<LayerSites>,
    ternary: bool,
}

#[inline]
fn signum<T: Scalar>(v: T) -> i8 {
    if v > T::zero() {
        1
    } else if v < T::zero() {
        -1
    } else {
        0
    }
}

impl Recorder {
    pub fn new(samples: usize) -> Self {
        Recorder {
            samples,
            matrix: Vec::new(),
            layers: Vec::new(),
            ternary: false,
        }
    }

    /// Applies the activation to `data` in place (`samples` equal-sized
    /// chunks, sample-major) and appends one row per scalar site.
    pub fn activate<T: Scalar>(
        &mut self,
        layer: impl Into<String>,
        kind: ActivationKind,
        data: &mut [T],
    ) -> Result<(), EngineError> {
        let layer = layer.into();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(EngineError::NumericOverflow { layer });
        }
        match kind {
            ActivationKind::Relu => data.iter_mut().for_each(|v| *v = v.max(T::zero())),
            ActivationKind::Gelu => {
                self.ternary = true;
                data.iter_mut().for_each(|v| *v = super::tensor::gelu(*v));
            }
        }
        let s_count = self.samples;
        let sites = data.len() / s_count;
        debug_assert_eq!(sites * s_count, data.len());
        let base = self.matrix.len();
        self.matrix.resize(base + sites * s_count, 0);
        let rows = &mut self.matrix[base..];
        for (s, chunk) in data.chunks(sites).enumerate() {
            for (j, &v) in chunk.iter().enumerate() {
                rows[j * s_count + s] = signum(v);
            }
        }
        self.layers.push(LayerSites { layer, sites });
        Ok(())
    }

    pub fn finish(self) -> ActivationRecord {
        let sites = self.layers.iter().map(|l| l.sites).sum();
        ActivationRecord {
            sites,
            samples: self.samples,
            matrix: self.matrix,
            per_layer_sites: self.layers,
            ternary: self.ternary,
        }
    }
}
