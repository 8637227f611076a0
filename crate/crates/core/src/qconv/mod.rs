//! Quantized convolution, four ways.
//!
//! * `reference`: FP64 sliding-window convolution.
//! * `elementwise`: de-transform every feature and weight code, then convolve in FP.
//! * `channelwise`: integer kernel sums per input channel, de-transformed once per channel:
//!   `y = sigma_w s^2 sum_c sigma_c KS_c + sigma_w s sum_c mu_c WS_c`, where `KS_c` is the
//!   in-bounds sum of feature-code times weight-code and `WS_c` the in-bounds sum of weight codes.
//! * `qq`: the channel parameters are themselves `m`-bit codes, so the whole channel sum runs in
//!   integers and only four global factors are FP.
//!
//! All integer arithmetic is exact (`i64`) and audited against a [`WidthPlan`]. Weight
//! layout is `C x C_out x K x K`, features `C x H x W`; stride 1, no bias.

mod block;
mod kernel;
mod pipelines;
mod width;

pub use block::{run_block, BlockLayer, BlockOutput, LayerReport};
pub use kernel::{integer_sums, ChannelCodes, IntegerSums};
pub use pipelines::{conv_channelwise, conv_channelwise_with, conv_elementwise, conv_qq, conv_qq_with, conv_reference, PipelineOutput};
pub use width::{ceil_log2, fits_width, plan_widths, product_width, sum_width, Site, SiteRange, WidthAudit, WidthPlan};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quant::{Granularity, QuantError};

#[derive(Debug, Error)]
pub enum ConvError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid convolution spec: {0}")]
    InvalidSpec(String),
    #[error("{0}")]
    Mismatch(String),
    #[error("this pipeline needs one layer-wide weight scale, got {0} granularity")]
    Granularity(Granularity),
    #[error("{site} value {value} does not fit the planned {bits}-bit accumulator")]
    Overflow { site: Site, bits: u32, value: i64 },
    #[error("unknown pipeline {0:?} (expected reference, elementwise, channelwise or qq)")]
    UnknownPipeline(String),
    #[error(transparent)]
    Quant(#[from] QuantError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Padding {
    /// Zero padding with offset `(K-1)/2`; output keeps the input size.
    #[default]
    Same,
    Valid,
}

impl FromStr for Padding {
    type Err = ConvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "same" => Ok(Self::Same),
            "valid" => Ok(Self::Valid),
            other => Err(ConvError::InvalidSpec(format!("unknown padding {other:?} (expected same or valid)"))),
        }
    }
}

impl fmt::Display for Padding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Same => "same",
            Self::Valid => "valid",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Reference,
    Elementwise,
    #[default]
    Channelwise,
    Qq,
}

impl Pipeline {
    pub const ALL: [Pipeline; 4] = [Self::Reference, Self::Elementwise, Self::Channelwise, Self::Qq];

    pub fn name(self) -> &'static str {
        match self {
            Self::Reference => "reference",
            Self::Elementwise => "elementwise",
            Self::Channelwise => "channelwise",
            Self::Qq => "qq",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pipeline {
    type Err = ConvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| ConvError::UnknownPipeline(s.to_string()))
    }
}

/// Shape and bit-widths of one stride-1 convolution layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub h: usize,
    pub w: usize,
    pub padding: Padding,
    /// Feature and weight bit-width `n`.
    pub bits: u8,
    /// Bit-width `m` of the quantized channel parameters.
    pub qq_bits: u8,
    /// Features follow a ReLU, so their code window may be shifted up.
    pub post_relu: bool,
}

impl ConvSpec {
    /// Same padding, `n = 2`, `m = 4`, no ReLU.
    pub fn new(c_in: usize, c_out: usize, k: usize, h: usize, w: usize) -> Self {
        Self { c_in, c_out, k, h, w, padding: Padding::Same, bits: 2, qq_bits: 4, post_relu: false }
    }

    /// 256 to 256 channels, 3x3 kernel on a 480x270 map (a x4 super-resolution body layer for
    /// FHD output), `n = 2`, `m = 4`.
    pub fn fhd_preset() -> Self {
        Self::new(256, 256, 3, 480, 270)
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    pub fn with_bits(mut self, bits: u8) -> Self {
        self.bits = bits;
        self
    }

    pub fn with_qq_bits(mut self, qq_bits: u8) -> Self {
        self.qq_bits = qq_bits;
        self
    }

    pub fn with_post_relu(mut self, post_relu: bool) -> Self {
        self.post_relu = post_relu;
        self
    }

    pub fn validate(&self) -> Result<(), ConvError> {
        let dims = [("C", self.c_in), ("C_out", self.c_out), ("K", self.k), ("H", self.h), ("W", self.w)];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(ConvError::InvalidSpec(format!("{name} must be positive")));
        }
        if self.padding == Padding::Valid && (self.k > self.h || self.k > self.w) {
            return Err(ConvError::InvalidSpec(format!("valid padding needs K <= H and K <= W, got K={} on {}x{}", self.k, self.h, self.w)));
        }
        for (name, b) in [("n", self.bits), ("m", self.qq_bits)] {
            if !(1..=8).contains(&b) {
                return Err(ConvError::InvalidSpec(format!("{name} = {b} outside 1..=8")));
            }
        }
        Ok(())
    }

    pub fn pad(&self) -> usize {
        match self.padding {
            Padding::Same => (self.k - 1) / 2,
            Padding::Valid => 0,
        }
    }

    /// `(H', W')`
    pub fn out_dims(&self) -> (usize, usize) {
        match self.padding {
            Padding::Same => (self.h, self.w),
            Padding::Valid => (self.h + 1 - self.k, self.w + 1 - self.k),
        }
    }

    pub fn positions(&self) -> usize {
        let (oh, ow) = self.out_dims();
        oh * ow
    }

    /// Width of a feature code: `n`, or `n + 1` when the post-ReLU shift may push codes up to
    /// `2^n - 1`.
    pub fn feature_bits(&self) -> u32 {
        self.bits as u32 + self.post_relu as u32
    }

    pub fn feature_shape(&self) -> [usize; 3] {
        [self.c_in, self.h, self.w]
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.c_in, self.c_out, self.k, self.k]
    }

    /// Spec implied by a feature and a weight shape.
    pub fn from_shapes(feature: &[usize], weight: &[usize]) -> Result<Self, ConvError> {
        let [c, h, w] = feature[..] else {
            return Err(ConvError::Shape(format!("feature must be C x H x W, got {feature:?}")));
        };
        let [wc, c_out, k, k2] = weight[..] else {
            return Err(ConvError::Shape(format!("weight must be C x C_out x K x K, got {weight:?}")));
        };
        if wc != c || k != k2 {
            return Err(ConvError::Shape(format!("weight {weight:?} does not fit feature {feature:?}")));
        }
        Ok(Self::new(c, c_out, k, h, w))
    }
}
