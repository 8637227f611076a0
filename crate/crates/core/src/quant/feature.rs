use crate::exec::Exec;
use crate::tensor::Tensor;

use super::{code_window, discretize, half_range, population_stats, QuantError, StepSizeTable, SIGMA_FLOOR};

/// Mean and population standard deviation of one channel.
pub fn channel_stats(channel: &[f64]) -> (f64, f64) {
    assert!(!channel.is_empty(), "channel must hold at least one value");
    population_stats(channel.iter().copied())
}

/// Window shift for a channel that follows a ReLU: `max(2^(n-1) - mean/(sigma*step) - 1, 0)`.
/// Channels that are not post-ReLU always get 0.
pub fn shift_alpha(mean: f64, sigma: f64, step: f64, bits: u8, post_relu: bool) -> f64 {
    if !post_relu || sigma < SIGMA_FLOOR {
        return 0.0;
    }
    (half_range(bits) as f64 - mean / (sigma * step) - 1.0).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelParams {
    pub mean: f64,
    /// 0 for degenerate channels.
    pub sigma: f64,
    pub alpha: f64,
}

impl ChannelParams {
    pub fn is_degenerate(&self) -> bool {
        self.sigma == 0.0
    }
}

/// Integer codes of a `C x H x W` feature map plus the per-channel transform.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedFeature {
    pub(crate) shape: [usize; 3],
    pub(crate) codes: Vec<i32>,
    pub(crate) bits: u8,
    pub(crate) step: f64,
    pub(crate) post_relu: bool,
    pub(crate) channels: Vec<ChannelParams>,
}

impl QuantizedFeature {
    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn post_relu(&self) -> bool {
        self.post_relu
    }

    pub fn codes(&self) -> &[i32] {
        &self.codes
    }

    pub fn channels(&self) -> &[ChannelParams] {
        &self.channels
    }

    pub fn channel_codes(&self, c: usize) -> &[i32] {
        let plane = self.shape[1] * self.shape[2];
        &self.codes[c * plane..(c + 1) * plane]
    }

    pub fn means(&self) -> Vec<f64> {
        self.channels.iter().map(|p| p.mean).collect()
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.channels.iter().map(|p| p.sigma).collect()
    }

    pub fn code_window(&self, c: usize) -> (i32, i32) {
        code_window(self.bits, self.channels[c].alpha)
    }

    /// Smallest de-transformed level of channel `c`.
    pub fn min_level(&self, c: usize) -> f64 {
        let p = self.channels[c];
        p.sigma * self.step * self.code_window(c).0 as f64 + p.mean
    }

    /// Codes for `x` under this feature's stored transform (no statistics are recomputed).
    pub fn encode(&self, x: &Tensor) -> Result<Vec<i32>, QuantError> {
        if x.shape() != self.shape {
            return Err(QuantError::Shape { expected: "tensor matching the quantized feature", actual: x.shape().to_vec() });
        }
        let plane = self.shape[1] * self.shape[2];
        Ok(x.data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let c = i / plane;
                let p = self.channels[c];
                if p.is_degenerate() {
                    return 0;
                }
                let (lo, hi) = self.code_window(c);
                discretize((v - p.mean) / (p.sigma * self.step), lo, hi)
            })
            .collect())
    }

    /// The same codes under other channel parameters, e.g. reconstructed ones. Windows and
    /// shifts are kept.
    pub fn with_params(&self, means: &[f64], sigmas: &[f64]) -> Result<Self, QuantError> {
        let c = self.channels.len();
        if means.len() != c || sigmas.len() != c {
            return Err(QuantError::LengthMismatch(means.len().max(sigmas.len()), c));
        }
        if let Some(v) = means.iter().chain(sigmas).find(|v| !v.is_finite()) {
            return Err(QuantError::InvalidParameter(format!("non-finite channel parameter {v}")));
        }
        let mut out = self.clone();
        for (p, (&mean, &sigma)) in out.channels.iter_mut().zip(means.iter().zip(sigmas)) {
            p.mean = mean;
            p.sigma = sigma;
        }
        Ok(out)
    }

    /// Largest absolute code over all channel windows; decides the operand width the
    /// integer pipelines must plan for.
    pub fn max_abs_window_code(&self) -> i64 {
        (0..self.channels.len())
            .map(|c| {
                let (lo, hi) = self.code_window(c);
                (lo as i64).abs().max((hi as i64).abs())
            })
            .max()
            .unwrap_or(0)
    }
}

pub fn quantize_feature(x: &Tensor, bits: u8, table: &StepSizeTable, post_relu: bool) -> Result<QuantizedFeature, QuantError> {
    quantize_feature_with(x, bits, table, post_relu, Exec::default())
}

pub fn quantize_feature_with(
    x: &Tensor,
    bits: u8,
    table: &StepSizeTable,
    post_relu: bool,
    exec: Exec,
) -> Result<QuantizedFeature, QuantError> {
    let step = table.step(bits)?;
    let [c, h, w]: [usize; 3] = x
        .shape()
        .try_into()
        .map_err(|_| QuantError::Shape { expected: "C x H x W", actual: x.shape().to_vec() })?;
    let plane = h * w;
    let per_channel = exec.map_indices(c, |ch| {
        let values = &x.data()[ch * plane..(ch + 1) * plane];
        let (mean, sigma) = channel_stats(values);
        if sigma < SIGMA_FLOOR {
            return (ChannelParams { mean, sigma: 0.0, alpha: 0.0 }, vec![0; plane]);
        }
        let alpha = shift_alpha(mean, sigma, step, bits, post_relu);
        let (lo, hi) = code_window(bits, alpha);
        let scale = sigma * step;
        let codes = values.iter().map(|&v| discretize((v - mean) / scale, lo, hi)).collect();
        (ChannelParams { mean, sigma, alpha }, codes)
    });
    let mut channels = Vec::with_capacity(c);
    let mut codes = Vec::with_capacity(c * plane);
    for (params, channel_codes) in per_channel {
        channels.push(params);
        codes.extend(channel_codes);
    }
    Ok(QuantizedFeature { shape: [c, h, w], codes, bits, step, post_relu, channels })
}

/// `sigma_c * s(n) * code + mean_c` for every element.
pub fn dequantize_feature(q: &QuantizedFeature) -> Tensor {
    let plane = q.shape[1] * q.shape[2];
    let data = q
        .codes
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let p = q.channels[i / plane];
            p.sigma * q.step * k as f64 + p.mean
        })
        .collect();
    Tensor::from_parts_unchecked(q.shape.to_vec(), data)
}
