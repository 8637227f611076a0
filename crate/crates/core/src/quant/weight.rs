use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

use super::{discretize, half_range, QuantError, StepSizeTable, SIGMA_FLOOR};

/// Grouping over which one weight scale is shared.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    #[default]
    Layer,
    OutputChannel,
    InputChannel,
    Kernel,
}

impl Granularity {
    pub const ALL: [Granularity; 4] = [Self::Layer, Self::OutputChannel, Self::InputChannel, Self::Kernel];

    pub fn group_count(self, c_in: usize, c_out: usize) -> usize {
        match self {
            Self::Layer => 1,
            Self::OutputChannel => c_out,
            Self::InputChannel => c_in,
            Self::Kernel => c_in * c_out,
        }
    }

    /// Group of the `K x K` kernel connecting input channel `c` to output channel `i`.
    pub fn group_of(self, c: usize, i: usize, c_out: usize) -> usize {
        match self {
            Self::Layer => 0,
            Self::OutputChannel => i,
            Self::InputChannel => c,
            Self::Kernel => c * c_out + i,
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Layer => "layer",
            Self::OutputChannel => "output-channel",
            Self::InputChannel => "input-channel",
            Self::Kernel => "kernel",
        })
    }
}

impl FromStr for Granularity {
    type Err = QuantError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|g| g.to_string() == s)
            .ok_or_else(|| QuantError::UnknownGranularity(s.to_string()))
    }
}

/// Codes of a `C x C_out x K x K` weight with one RMS scale per group.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedWeight {
    pub(crate) shape: [usize; 4],
    pub(crate) codes: Vec<i32>,
    pub(crate) bits: u8,
    pub(crate) step: f64,
    pub(crate) granularity: Granularity,
    pub(crate) scales: Vec<f64>,
}

impl QuantizedWeight {
    /// `[C, C_out, K, K]`
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn kernel_size(&self) -> usize {
        self.shape[2]
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn codes(&self) -> &[i32] {
        &self.codes
    }

    /// Codes of the kernel from input channel `c` to output channel `i`, row-major `K x K`.
    pub fn kernel_codes(&self, c: usize, i: usize) -> &[i32] {
        let kk = self.shape[2] * self.shape[3];
        let start = (c * self.shape[1] + i) * kk;
        &self.codes[start..start + kk]
    }

    pub fn scale_of(&self, c: usize, i: usize) -> f64 {
        self.scales[self.granularity.group_of(c, i, self.shape[1])]
    }

    /// Largest absolute code the window allows.
    pub fn max_abs_window_code(&self) -> i64 {
        half_range(self.bits) as i64
    }
}

fn weight_shape(w: &Tensor) -> Result<[usize; 4], QuantError> {
    let shape: [usize; 4] = w
        .shape()
        .try_into()
        .map_err(|_| QuantError::Shape { expected: "C x C_out x K x K", actual: w.shape().to_vec() })?;
    if shape[2] != shape[3] {
        return Err(QuantError::Shape { expected: "square K x K kernels", actual: w.shape().to_vec() });
    }
    Ok(shape)
}

/// Zero-mean weight quantizer: each group is scaled by its root mean square, codes are
/// clamped to `(-2^(n-1), 2^(n-1)]`. All-zero groups get scale 1 and codes 0.
pub fn quantize_weight(w: &Tensor, bits: u8, table: &StepSizeTable, granularity: Granularity) -> Result<QuantizedWeight, QuantError> {
    let step = table.step(bits)?;
    let shape = weight_shape(w)?;
    let [c_in, c_out, k, _] = shape;
    let kk = k * k;
    let groups = granularity.group_count(c_in, c_out);
    let group_at = |flat: usize| {
        let kernel = flat / kk;
        granularity.group_of(kernel / c_out, kernel % c_out, c_out)
    };

    let mut sum_sq = vec![0.0f64; groups];
    let mut count = vec![0usize; groups];
    for (flat, &v) in w.data().iter().enumerate() {
        let g = group_at(flat);
        sum_sq[g] += v * v;
        count[g] += 1;
    }
    let scales: Vec<f64> = sum_sq
        .iter()
        .zip(&count)
        .map(|(&s, &n)| {
            let rms = (s / n as f64).sqrt();
            if rms < SIGMA_FLOOR {
                1.0
            } else {
                rms
            }
        })
        .collect();
    let degenerate: Vec<bool> = sum_sq.iter().zip(&count).map(|(&s, &n)| (s / n as f64).sqrt() < SIGMA_FLOOR).collect();

    let half = half_range(bits);
    let codes = w
        .data()
        .iter()
        .enumerate()
        .map(|(flat, &v)| {
            let g = group_at(flat);
            if degenerate[g] {
                0
            } else {
                discretize(v / (scales[g] * step), -half + 1, half)
            }
        })
        .collect();
    Ok(QuantizedWeight { shape, codes, bits, step, granularity, scales })
}

/// `scale_g * s(n) * code` for every element.
pub fn dequantize_weight(q: &QuantizedWeight) -> Tensor {
    let [_, c_out, k, _] = q.shape;
    let kk = k * k;
    let data = q
        .codes
        .iter()
        .enumerate()
        .map(|(flat, &code)| {
            let kernel = flat / kk;
            q.scale_of(kernel / c_out, kernel % c_out) * q.step * code as f64
        })
        .collect();
    Tensor::from_parts_unchecked(q.shape.to_vec(), data)
}
