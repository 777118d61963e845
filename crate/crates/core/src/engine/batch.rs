//! Input batches and their on-disk formats.
//!
//! Image batch file (all little-endian):
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `SWPI`                  |
//! | 4      | 4    | S, u32                        |
//! | 8      | 2    | C, u16                        |
//! | 10     | 2    | H, u16                        |
//! | 12     | 2    | W, u16                        |
//! | 14     | 2    | reserved, must be 0           |
//! | 16     | 4·S·C·H·W | f32 values, NCHW order   |
//!
//! Token batch file: magic `SWPT`, S u32, T u32, reserved u32 (0), then
//! S·T u32 token ids in sample-major order.
//!
//! Gaussian-noise batches are not stored: element `i` of the flattened
//! sample-major tensor is `stream_normal(seed, i)` from [`crate::rng`], so a
//! batch of S samples is always a prefix of the batch with S+1 samples.

use super::{Architecture, EngineError};
use crate::rng::{stream_normal, stream_u64};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

pub const IMAGE_MAGIC: [u8; 4] = *b"SWPI";
pub const TOKEN_MAGIC: [u8; 4] = *b"SWPT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchKind {
    Image,
    Tokens,
    GaussianNoise,
}

impl fmt::Display for BatchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BatchKind::Image => "image",
            BatchKind::Tokens => "tokens",
            BatchKind::GaussianNoise => "noise",
        })
    }
}

impl std::str::FromStr for BatchKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "image" => Ok(BatchKind::Image),
            "tokens" => Ok(BatchKind::Tokens),
            "noise" | "gaussian_noise" => Ok(BatchKind::GaussianNoise),
            _ => Err(format!("unknown batch kind `{s}` (image|tokens|noise)")),
        }
    }
}

/// Per-sample input shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InputDims {
    Image { c: usize, h: usize, w: usize },
    Tokens { t: usize },
    /// Pre-embedded sequences fed straight into a transformer.
    Embedded { t: usize, d: usize },
}

impl InputDims {
    pub fn per_sample(&self) -> usize {
        match *self {
            InputDims::Image { c, h, w } => c * h * w,
            InputDims::Tokens { t } => t,
            InputDims::Embedded { t, d } => t * d,
        }
    }
}

impl fmt::Display for InputDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputDims::Image { c, h, w } => write!(f, "{c}x{h}x{w}"),
            InputDims::Tokens { t } => write!(f, "{t}"),
            InputDims::Embedded { t, d } => write!(f, "{t}x{d}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BatchData {
    Values(Vec<f32>),
    Tokens(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputBatch {
    pub kind: BatchKind,
    pub samples: usize,
    pub dims: InputDims,
    pub data: BatchData,
    /// Human-readable provenance, e.g. `noise(seed=3,8x3x32x32)`.
    pub descriptor: String,
}

impl InputBatch {
    pub fn gaussian_noise(samples: usize, dims: InputDims, seed: u64) -> Result<Self, EngineError> {
        if matches!(dims, InputDims::Tokens { .. }) {
            return Err(EngineError::ShapeMismatch("noise batches need real-valued dims".into()));
        }
        check_positive(samples, &dims)?;
        let n = samples * dims.per_sample();
        let data = (0..n as u64).map(|i| stream_normal(seed, i) as f32).collect();
        Ok(InputBatch {
            kind: BatchKind::GaussianNoise,
            samples,
            dims,
            data: BatchData::Values(data),
            descriptor: format!("noise(seed={seed},{samples}x{dims})"),
        })
    }

    /// Uniformly random token ids: id `i` is `stream_u64(seed, i) % vocab`.
    pub fn random_tokens(samples: usize, seq_len: usize, vocab: usize, seed: u64) -> Result<Self, EngineError> {
        let dims = InputDims::Tokens { t: seq_len };
        check_positive(samples, &dims)?;
        if vocab == 0 {
            return Err(EngineError::ShapeMismatch("vocab must be positive".into()));
        }
        let ids = (0..(samples * seq_len) as u64)
            .map(|i| (stream_u64(seed, i) % vocab as u64) as u32)
            .collect();
        Ok(InputBatch {
            kind: BatchKind::Tokens,
            samples,
            dims,
            data: BatchData::Tokens(ids),
            descriptor: format!("tokens(seed={seed},{samples}x{seq_len})"),
        })
    }

    pub fn images(samples: usize, c: usize, h: usize, w: usize, data: Vec<f32>) -> Result<Self, EngineError> {
        let dims = InputDims::Image { c, h, w };
        check_positive(samples, &dims)?;
        if data.len() != samples * dims.per_sample() {
            return Err(EngineError::ShapeMismatch(format!(
                "{} values for a {samples}x{dims} batch",
                data.len()
            )));
        }
        Ok(InputBatch {
            kind: BatchKind::Image,
            samples,
            dims,
            data: BatchData::Values(data),
            descriptor: format!("image({samples}x{dims})"),
        })
    }

    pub fn tokens(samples: usize, seq_len: usize, ids: Vec<u32>) -> Result<Self, EngineError> {
        let dims = InputDims::Tokens { t: seq_len };
        check_positive(samples, &dims)?;
        if ids.len() != samples * seq_len {
            return Err(EngineError::ShapeMismatch(format!(
                "{} ids for a {samples}x{seq_len} batch",
                ids.len()
            )));
        }
        Ok(InputBatch {
            kind: BatchKind::Tokens,
            samples,
            dims,
            data: BatchData::Tokens(ids),
            descriptor: format!("tokens({samples}x{seq_len})"),
        })
    }

    /// The batch made of the given samples, in the given order.
    pub fn select(&self, indices: &[usize]) -> InputBatch {
        let per = self.dims.per_sample();
        let data = match &self.data {
            BatchData::Values(v) => BatchData::Values(
                indices.iter().flat_map(|&i| v[i * per..(i + 1) * per].iter().copied()).collect(),
            ),
            BatchData::Tokens(v) => BatchData::Tokens(
                indices.iter().flat_map(|&i| v[i * per..(i + 1) * per].iter().copied()).collect(),
            ),
        };
        InputBatch {
            kind: self.kind,
            samples: indices.len(),
            dims: self.dims,
            data,
            descriptor: format!("{}[{} selected]", self.descriptor, indices.len()),
        }
    }

    /// First `samples` samples.
    pub fn prefix(&self, samples: usize) -> Result<InputBatch, EngineError> {
        if samples == 0 || samples > self.samples {
            return Err(EngineError::ShapeMismatch(format!(
                "cannot take {samples} of {} samples",
                self.samples
            )));
        }
        let mut b = self.select(&(0..samples).collect::<Vec<_>>());
        b.descriptor = format!("{}[..{samples}]", self.descriptor);
        Ok(b)
    }

    /// Centre crop of an image batch.
    pub fn center_crop(&self, h: usize, w: usize) -> Result<InputBatch, EngineError> {
        let (InputDims::Image { c, h: sh, w: sw }, BatchData::Values(v)) = (self.dims, &self.data) else {
            return Err(EngineError::ShapeMismatch("only image batches can be cropped".into()));
        };
        if h == 0 || w == 0 || h > sh || w > sw {
            return Err(EngineError::ShapeMismatch(format!(
                "crop {h}x{w} does not fit inside source {sh}x{sw}"
            )));
        }
        let (top, left) = ((sh - h) / 2, (sw - w) / 2);
        let mut out = Vec::with_capacity(self.samples * c * h * w);
        for plane in v.chunks(sh * sw) {
            for y in top..top + h {
                out.extend_from_slice(&plane[y * sw + left..y * sw + left + w]);
            }
        }
        Ok(InputBatch {
            kind: self.kind,
            samples: self.samples,
            dims: InputDims::Image { c, h, w },
            data: BatchData::Values(out),
            descriptor: format!("{}[crop {h}x{w}]", self.descriptor),
        })
    }

    pub fn read_image_file(path: &Path) -> Result<InputBatch, EngineError> {
        let bytes = read_all(path)?;
        let header = header(&bytes, IMAGE_MAGIC, path)?;
        let s = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let c = u16::from_le_bytes(header[8..10].try_into().unwrap()) as usize;
        let h = u16::from_le_bytes(header[10..12].try_into().unwrap()) as usize;
        let w = u16::from_le_bytes(header[12..14].try_into().unwrap()) as usize;
        let body = &bytes[16..];
        if body.len() != 4 * s * c * h * w {
            return Err(bad_file(path, "payload size does not match header"));
        }
        let data = body
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let mut batch = InputBatch::images(s, c, h, w, data)?;
        batch.descriptor = format!("image({},{s}x{c}x{h}x{w})", path.display());
        Ok(batch)
    }

    pub fn write_image_file(&self, path: &Path) -> Result<(), EngineError> {
        let (InputDims::Image { c, h, w }, BatchData::Values(v)) = (self.dims, &self.data) else {
            return Err(EngineError::ShapeMismatch("not an image batch".into()));
        };
        let narrow = |x: usize| {
            u16::try_from(x).map_err(|_| EngineError::ShapeMismatch(format!("dimension {x} exceeds u16")))
        };
        let mut buf = Vec::with_capacity(16 + 4 * v.len());
        buf.extend_from_slice(&IMAGE_MAGIC);
        buf.extend_from_slice(&(self.samples as u32).to_le_bytes());
        buf.extend_from_slice(&narrow(c)?.to_le_bytes());
        buf.extend_from_slice(&narrow(h)?.to_le_bytes());
        buf.extend_from_slice(&narrow(w)?.to_le_bytes());
        buf.extend_from_slice(&0u16.to_le_bytes());
        for x in v {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        std::fs::File::create(path)?.write_all(&buf)?;
        Ok(())
    }

    pub fn read_token_file(path: &Path) -> Result<InputBatch, EngineError> {
        let bytes = read_all(path)?;
        let header = header(&bytes, TOKEN_MAGIC, path)?;
        let s = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let t = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let body = &bytes[16..];
        if body.len() != 4 * s * t {
            return Err(bad_file(path, "payload size does not match header"));
        }
        let ids = body
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let mut batch = InputBatch::tokens(s, t, ids)?;
        batch.descriptor = format!("tokens({},{s}x{t})", path.display());
        Ok(batch)
    }

    pub fn write_token_file(&self, path: &Path) -> Result<(), EngineError> {
        let (InputDims::Tokens { t }, BatchData::Tokens(ids)) = (self.dims, &self.data) else {
            return Err(EngineError::ShapeMismatch("not a token batch".into()));
        };
        let mut buf = Vec::with_capacity(16 + 4 * ids.len());
        buf.extend_from_slice(&TOKEN_MAGIC);
        buf.extend_from_slice(&(self.samples as u32).to_le_bytes());
        buf.extend_from_slice(&(t as u32).to_le_bytes());
        buf.extend_from_slice(&0u32.to_le_bytes());
        for x in ids {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        std::fs::File::create(path)?.write_all(&buf)?;
        Ok(())
    }
}

fn check_positive(samples: usize, dims: &InputDims) -> Result<(), EngineError> {
    if samples == 0 || dims.per_sample() == 0 {
        return Err(EngineError::ShapeMismatch(format!(
            "batch needs S >= 1 and positive dims, got {samples}x{dims}"
        )));
    }
    Ok(())
}

fn read_all(path: &Path) -> Result<Vec<u8>, EngineError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    Ok(bytes)
}

fn header<'a>(bytes: &'a [u8], magic: [u8; 4], path: &Path) -> Result<&'a [u8], EngineError> {
    if bytes.len() < 16 {
        return Err(bad_file(path, "shorter than the 16-byte header"));
    }
    if bytes[0..4] != magic {
        return Err(bad_file(path, "bad magic"));
    }
    Ok(&bytes[..16])
}

fn bad_file(path: &Path, why: &str) -> EngineError {
    EngineError::BadBatchFile(format!("{}: {why}", path.display()))
}

/// Declarative batch description, materialised per architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub kind: BatchKind,
    pub samples: usize,
    /// Image height/width (cell networks); ignored for transformers, whose
    /// shape comes from the genome.
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub path: Option<PathBuf>,
}

impl Default for BatchSpec {
    fn default() -> Self {
        BatchSpec {
            kind: BatchKind::GaussianNoise,
            samples: 8,
            height: 32,
            width: 32,
            seed: 0,
            path: None,
        }
    }
}

impl BatchSpec {
    pub fn noise(samples: usize, height: usize, width: usize, seed: u64) -> Self {
        BatchSpec {
            kind: BatchKind::GaussianNoise,
            samples,
            height,
            width,
            seed,
            path: None,
        }
    }

    pub fn materialise(&self, arch: &Architecture) -> Result<InputBatch, EngineError> {
        let expected = arch.input_dims(self.height, self.width);
        match (self.kind, &self.path) {
            (BatchKind::GaussianNoise, _) => {
                let dims = match expected {
                    InputDims::Tokens { t } => match arch {
                        Architecture::Transformer(g) => InputDims::Embedded { t, d: g.d_model },
                        _ => unreachable!("only transformers take tokens"),
                    },
                    d => d,
                };
                InputBatch::gaussian_noise(self.samples, dims, self.seed)
            }
            (BatchKind::Tokens, None) => match arch {
                Architecture::Transformer(g) => {
                    InputBatch::random_tokens(self.samples, g.seq_len, g.vocab, self.seed)
                }
                _ => Err(EngineError::ShapeMismatch("token batch for a non-transformer".into())),
            },
            (BatchKind::Tokens, Some(p)) => InputBatch::read_token_file(p)?.prefix(self.samples),
            (BatchKind::Image, Some(p)) => {
                let b = InputBatch::read_image_file(p)?.prefix(self.samples)?;
                match expected {
                    InputDims::Image { h, w, .. } => b.center_crop(h, w),
                    _ => Err(EngineError::ShapeMismatch("image batch for a transformer".into())),
                }
            }
            (BatchKind::Image, None) => Err(EngineError::ShapeMismatch(
                "image batches need a source file".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_batches_nest() {
        let dims = InputDims::Image { c: 3, h: 4, w: 4 };
        let small = InputBatch::gaussian_noise(2, dims, 5).unwrap();
        let big = InputBatch::gaussian_noise(6, dims, 5).unwrap();
        assert_eq!(big.prefix(2).unwrap().data, small.data);
        let BatchData::Values(v) = &small.data else { panic!() };
        assert_eq!(v[3], stream_normal(5, 3) as f32);
    }

    #[test]
    fn image_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.bin");
        let data: Vec<f32> = (0..2 * 3 * 5 * 4).map(|i| i as f32 * 0.5 - 3.0).collect();
        let b = InputBatch::images(2, 3, 5, 4, data).unwrap();
        b.write_image_file(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"SWPI");
        assert_eq!(bytes.len(), 16 + 4 * 120);
        assert_eq!(&bytes[4..16], &[2, 0, 0, 0, 3, 0, 5, 0, 4, 0, 0, 0]);
        let back = InputBatch::read_image_file(&p).unwrap();
        assert_eq!(back.data, b.data);
        assert_eq!(back.dims, b.dims);
    }

    #[test]
    fn token_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.bin");
        let b = InputBatch::random_tokens(3, 7, 50, 1).unwrap();
        b.write_token_file(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..16], &[b'S', b'W', b'P', b'T', 3, 0, 0, 0, 7, 0, 0, 0, 0, 0, 0, 0]);
        let back = InputBatch::read_token_file(&p).unwrap();
        assert_eq!(back.data, b.data);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        std::fs::write(&p, b"SWPI\x01\x00").unwrap();
        assert!(matches!(InputBatch::read_image_file(&p), Err(EngineError::BadBatchFile(_))));
    }

    #[test]
    fn crop_takes_centre_and_rejects_oversize() {
        let data: Vec<f32> = (0..16).map(|i| i as f32).collect();
        let b = InputBatch::images(1, 1, 4, 4, data).unwrap();
        let c = b.center_crop(2, 2).unwrap();
        assert_eq!(c.data, BatchData::Values(vec![5.0, 6.0, 9.0, 10.0]));
        assert!(b.center_crop(5, 4).is_err());
    }
}
