//! Dense NCHW tensors and the handful of kernels the engine needs.
//!
//! Everything here is single-threaded and accumulates in a fixed order so a
//! forward pass is bit-reproducible.

use num_traits::Float;
use std::fmt::Debug;

pub trait Scalar: Float + Default + Debug + Send + Sync + std::iter::Sum + 'static {
    fn from_f32(v: f32) -> Self;
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn erf(self) -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn from_f32(v: f32) -> Self {
        v
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn erf(self) -> Self {
        libm::erff(self)
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f32(v: f32) -> Self {
        v as f64
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    #[inline]
    fn erf(self) -> Self {
        libm::erf(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor {
            n,
            c,
            h,
            w,
            data: vec![T::zero(); n * c * h * w],
        }
    }

    pub fn from_f32(n: usize, c: usize, h: usize, w: usize, src: &[f32]) -> Self {
        assert_eq!(src.len(), n * c * h * w);
        Tensor {
            n,
            c,
            h,
            w,
            data: src.iter().map(|&v| T::from_f32(v)).collect(),
        }
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn per_sample(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        (self.n, self.c, self.h, self.w) == (other.n, other.c, other.h, other.w)
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert!(self.same_shape(other));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }
}

pub(crate) fn cast_weights<T: Scalar>(w: &[f32]) -> Vec<T> {
    w.iter().map(|&v| T::from_f32(v)).collect()
}

/// 2-D convolution with zero padding, dilation and channel groups.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub groups: usize,
    /// `[out, in / groups, k, k]`
    pub weight: Vec<f32>,
    pub bias: Option<Vec<f32>>,
}

impl Conv2d {
    pub fn fan_in(&self) -> usize {
        self.in_channels / self.groups * self.kernel * self.kernel
    }

    pub fn param_count(&self) -> u64 {
        (self.weight.len() + self.bias.as_ref().map_or(0, Vec::len)) as u64
    }

    pub fn output_size(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let span = self.dilation * (self.kernel - 1) + 1;
        let (hp, wp) = (h + 2 * self.padding, w + 2 * self.padding);
        if hp < span || wp < span {
            return None;
        }
        Some(((hp - span) / self.stride + 1, (wp - span) / self.stride + 1))
    }

    /// Multiply-accumulates for one sample at input size `h x w`.
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let (oh, ow) = self.output_size(h, w).unwrap_or((0, 0));
        (self.out_channels * self.fan_in() * oh * ow) as u64
    }

    pub fn forward<T: Scalar>(&self, x: &Tensor<T>) -> Tensor<T> {
        assert_eq!(x.c, self.in_channels, "conv input channels");
        let (oh, ow) = self
            .output_size(x.h, x.w)
            .expect("conv output size checked at shape inference");
        let mut out = Tensor::zeros(x.n, self.out_channels, oh, ow);
        let weight: Vec<T> = cast_weights(&self.weight);
        let k = self.kernel;
        let cin_g = self.in_channels / self.groups;
        let cout_g = self.out_channels / self.groups;
        let (ih, iw) = (x.h as isize, x.w as isize);
        let (s, p, d) = (self.stride as isize, self.padding as isize, self.dilation as isize);
        for n in 0..x.n {
            for oc in 0..self.out_channels {
                let g = oc / cout_g;
                let obase = (n * self.out_channels + oc) * oh * ow;
                let oplane = &mut out.data[obase..obase + oh * ow];
                if let Some(b) = &self.bias {
                    oplane.fill(T::from_f32(b[oc]));
                }
                for icg in 0..cin_g {
                    let ic = g * cin_g + icg;
                    let ibase = (n * x.c + ic) * x.h * x.w;
                    let iplane = &x.data[ibase..ibase + x.h * x.w];
                    for kh in 0..k {
                        for kw in 0..k {
                            let wv = weight[((oc * cin_g + icg) * k + kh) * k + kw];
                            if wv == T::zero() {
                                continue;
                            }
                            let off_w = kw as isize * d - p;
                            // ow range with 0 <= ow*s + off_w < iw
                            let lo = if off_w >= 0 { 0 } else { ((-off_w) + s - 1) / s };
                            let hi = if iw - off_w <= 0 { 0 } else { (iw - off_w - 1) / s + 1 };
                            let (lo, hi) = (lo.max(0) as usize, (hi as usize).min(ow));
                            if lo >= hi {
                                continue;
                            }
                            for oy in 0..oh {
                                let iy = oy as isize * s + kh as isize * d - p;
                                if iy < 0 || iy >= ih {
                                    continue;
                                }
                                let irow = &iplane[iy as usize * x.w..(iy as usize + 1) * x.w];
                                let orow = &mut oplane[oy * ow..(oy + 1) * ow];
                                if s == 1 {
                                    let start = (lo as isize + off_w) as usize;
                                    for (o, &i) in orow[lo..hi].iter_mut().zip(&irow[start..]) {
                                        *o = *o + wv * i;
                                    }
                                } else {
                                    for (ox, o) in orow.iter_mut().enumerate().take(hi).skip(lo) {
                                        let ix = (ox as isize * s + off_w) as usize;
                                        *o = *o + wv * irow[ix];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Fully connected layer, weight laid out `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Vec<f32>,
    pub bias: Option<Vec<f32>>,
}

impl Linear {
    pub fn param_count(&self) -> u64 {
        (self.weight.len() + self.bias.as_ref().map_or(0, Vec::len)) as u64
    }

    pub fn macs(&self) -> u64 {
        (self.in_features * self.out_features) as u64
    }

    /// Applies the layer to `rows` contiguous input rows.
    pub fn forward<T: Scalar>(&self, x: &[T], rows: usize) -> Vec<T> {
        assert_eq!(x.len(), rows * self.in_features, "linear input size");
        let weight: Vec<T> = cast_weights(&self.weight);
        let bias: Option<Vec<T>> = self.bias.as_deref().map(cast_weights);
        let mut out = vec![T::zero(); rows * self.out_features];
        for r in 0..rows {
            let xr = &x[r * self.in_features..(r + 1) * self.in_features];
            let or = &mut out[r * self.out_features..(r + 1) * self.out_features];
            for (o, slot) in or.iter_mut().enumerate() {
                let wr = &weight[o * self.in_features..(o + 1) * self.in_features];
                let mut acc = bias.as_ref().map_or(T::zero(), |b| b[o]);
                for (&a, &b) in xr.iter().zip(wr) {
                    acc = acc + a * b;
                }
                *slot = acc;
            }
        }
        out
    }
}

/// How batch normalisation layers compute their statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// Per-call batch statistics (an untrained network has no running stats).
    #[default]
    BatchStats,
    /// Normalisation layers are the identity; samples never interact.
    Identity,
}

impl std::fmt::Display for NormMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NormMode::BatchStats => "batch_stats",
            NormMode::Identity => "identity",
        })
    }
}

impl std::str::FromStr for NormMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "batch_stats" => Ok(NormMode::BatchStats),
            "identity" => Ok(NormMode::Identity),
            _ => Err(format!("unknown norm mode `{s}` (batch_stats|identity)")),
        }
    }
}

pub const BN_EPS: f64 = 1e-5;

/// Batch normalisation with unit scale and zero shift.
///
/// Channel statistics are accumulated in f64 per sample, and the per-sample
/// partial sums are combined in sorted order so the result does not depend
/// on the order of samples in the batch.
pub fn batch_norm<T: Scalar>(x: &mut Tensor<T>, mode: NormMode) {
    if mode == NormMode::Identity {
        return;
    }
    let plane = x.plane();
    let count = (x.n * plane) as f64;
    let sorted_sum = |mut parts: Vec<f64>| {
        parts.sort_by(f64::total_cmp);
        parts.into_iter().sum::<f64>()
    };
    for c in 0..x.c {
        let slice = |n: usize| &x.data[(n * x.c + c) * plane..(n * x.c + c + 1) * plane];
        let mean = sorted_sum(
            (0..x.n)
                .map(|n| slice(n).iter().map(|v| v.as_f64()).sum::<f64>())
                .collect(),
        ) / count;
        let var = sorted_sum(
            (0..x.n)
                .map(|n| slice(n).iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>())
                .collect(),
        ) / count;
        let scale = T::from_f64(1.0 / (var + BN_EPS).sqrt());
        let shift = T::from_f64(mean);
        for n in 0..x.n {
            let base = (n * x.c + c) * plane;
            for v in &mut x.data[base..base + plane] {
                *v = (*v - shift) * scale;
            }
        }
    }
}

/// Layer normalisation over the last `width` values of each row, unit scale
/// and zero shift.
pub fn layer_norm<T: Scalar>(x: &mut [T], width: usize) {
    for row in x.chunks_mut(width) {
        let n = T::from_f64(width as f64);
        let mean = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let inv = T::one() / (var + T::from_f64(BN_EPS)).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * inv;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Average,
    Max,
}

/// Pooling with padding; averages count only in-bounds elements. The output
/// size uses ceiling division so stride-2 pooling matches a padded stride-2
/// convolution.
pub fn pool2d<T: Scalar>(
    x: &Tensor<T>,
    kind: PoolKind,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Tensor<T> {
    let oh = pool_output_len(x.h, kernel, stride, padding);
    let ow = pool_output_len(x.w, kernel, stride, padding);
    let mut out = Tensor::zeros(x.n, x.c, oh, ow);
    for nc in 0..x.n * x.c {
        let ip = &x.data[nc * x.h * x.w..(nc + 1) * x.h * x.w];
        let op = &mut out.data[nc * oh * ow..(nc + 1) * oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let y0 = (oy * stride) as isize - padding as isize;
                let x0 = (ox * stride) as isize - padding as isize;
                let mut acc = match kind {
                    PoolKind::Average => T::zero(),
                    PoolKind::Max => T::neg_infinity(),
                };
                let mut count = 0usize;
                for ky in 0..kernel as isize {
                    for kx in 0..kernel as isize {
                        let (iy, ix) = (y0 + ky, x0 + kx);
                        if iy < 0 || ix < 0 || iy >= x.h as isize || ix >= x.w as isize {
                            continue;
                        }
                        let v = ip[iy as usize * x.w + ix as usize];
                        acc = match kind {
                            PoolKind::Average => acc + v,
                            PoolKind::Max => acc.max(v),
                        };
                        count += 1;
                    }
                }
                op[oy * ow + ox] = match kind {
                    PoolKind::Average => acc / T::from_f64(count as f64),
                    PoolKind::Max => acc,
                };
            }
        }
    }
    out
}

/// Ceil-mode output length; every window starts inside the input or its left
/// padding.
pub fn pool_output_len(len: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    let span = len + 2 * padding;
    let mut out = if span <= kernel {
        1
    } else {
        (span - kernel).div_ceil(stride) + 1
    };
    if (out - 1) * stride >= len + padding {
        out -= 1;
    }
    out
}

/// Global average pooling to `[n, c]`.
pub fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Vec<T> {
    let plane = x.plane();
    let inv = T::from_f64(1.0 / plane as f64);
    x.data
        .chunks(plane)
        .map(|p| p.iter().copied().sum::<T>() * inv)
        .collect()
}

#[inline]
pub fn gelu<T: Scalar>(x: T) -> T {
    let half = T::from_f64(0.5);
    x * half * (T::one() + (x * T::from_f64(std::f64::consts::FRAC_1_SQRT_2)).erf())
}
