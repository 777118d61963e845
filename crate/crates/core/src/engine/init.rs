use super::tensor::{Conv2d, Linear};
use crate::rng::{derive_key, stream_normal};

/// Hands out parameter tensors in construction order. Tensor `i` of a
/// network initialised with `seed` is drawn from the stream keyed by
/// `derive_key(&[seed, i])`, so weights never depend on thread scheduling.
pub(crate) struct Init {
    seed: u64,
    next: u64,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Init { seed, next: 0 }
    }

    pub fn normal(&mut self, len: usize, std: f64) -> Vec<f32> {
        let key = derive_key(&[self.seed, self.next]);
        self.next += 1;
        (0..len as u64).map(|j| (stream_normal(key, j) * std) as f32).collect()
    }

    /// Fan-in scaled normal, `std = sqrt(2 / fan_in)`.
    pub fn kaiming(&mut self, len: usize, fan_in: usize) -> Vec<f32> {
        self.normal(len, (2.0 / fan_in as f64).sqrt())
    }

    #[allow(clippy::too_many_arguments)]
    pub fn conv(
        &mut self,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        dilation: usize,
        groups: usize,
        bias: bool,
    ) -> Conv2d {
        let fan_in = in_channels / groups * kernel * kernel;
        let weight = self.kaiming(out_channels * fan_in, fan_in);
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            dilation,
            groups,
            weight,
            bias: bias.then(|| vec![0.0; out_channels]),
        }
    }

    pub fn linear(&mut self, in_features: usize, out_features: usize, bias: bool) -> Linear {
        Linear {
            in_features,
            out_features,
            weight: self.kaiming(in_features * out_features, in_features),
            bias: bias.then(|| vec![0.0; out_features]),
        }
    }
}
