//! Distribution-aware quantization of feature maps, weights and of the per-channel
//! quantization parameters themselves.
//!
//! Every quantizer in this module shares one discretizer: standardize with a location and a
//! scale, divide by the step size `s(n)`, round half away from zero and clamp to a window of
//! exactly `2^n` consecutive integers. For an unshifted window the codes are
//! `(-2^(n-1), 2^(n-1)]`.

mod feature;
mod qq;
mod step;
mod weight;

pub use feature::{channel_stats, dequantize_feature, quantize_feature, quantize_feature_with, shift_alpha, ChannelParams, QuantizedFeature};
pub use qq::{quantize_qq, QQParams};
pub use step::{fit_uniform_step, midrise_mse, StepSizeTable};
pub use weight::{dequantize_weight, quantize_weight, Granularity, QuantizedWeight};

use thiserror::Error;

/// Scales below this are treated as degenerate: codes are 0 and the location is reproduced exactly.
pub const SIGMA_FLOOR: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum QuantError {
    #[error("no step size for {bits}-bit quantization in the {distribution} table")]
    UnknownBitWidth { bits: u8, distribution: String },
    #[error("expected a {expected} tensor, got shape {actual:?}")]
    Shape { expected: &'static str, actual: Vec<usize> },
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown granularity {0:?} (expected layer, output-channel, input-channel or kernel)")]
    UnknownGranularity(String),
    #[error("step table line {line}: {message}")]
    TableParse { line: usize, message: String },
    #[error("step table violates invariant: {0}")]
    TableInvariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lowest code of the `2^n`-level window for shift `alpha`.
pub fn window_min(bits: u8, alpha: f64) -> i32 {
    (-(half_range(bits) as f64) + alpha).floor() as i32 + 1
}

/// `(k_min, k_max)` with `k_max - k_min + 1 == 2^bits`.
pub fn code_window(bits: u8, alpha: f64) -> (i32, i32) {
    let lo = window_min(bits, alpha);
    (lo, lo + (1i32 << bits) - 1)
}

pub(crate) fn half_range(bits: u8) -> i32 {
    1i32 << (bits - 1)
}

/// Round half away from zero, then clamp into `[lo, hi]`.
///
/// Clamping the real value to `(lo - 1, hi]` before rounding gives the same integer, since
/// rounding is monotone and `hi` is an integer.
pub(crate) fn discretize(standardized: f64, lo: i32, hi: i32) -> i32 {
    let r = standardized.round();
    if r <= lo as f64 {
        lo
    } else if r >= hi as f64 {
        hi
    } else {
        r as i32
    }
}

/// Population mean and standard deviation (divide by N).
pub(crate) fn population_stats(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    // constant inputs reproduce their value exactly instead of going through sum / n
    let mut it = values.clone();
    if let Some(first) = it.next() {
        if it.all(|v| v == first) {
            return (first, 0.0);
        }
    }
    let (sum, count) = values.clone().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    debug_assert!(count > 0);
    let n = count as f64;
    let mean = sum / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_have_two_to_the_n_levels() {
        for bits in 1..=8u8 {
            for alpha in [0.0, 0.25, 0.5, 1.0, 3.7] {
                let (lo, hi) = code_window(bits, alpha);
                assert_eq!(hi - lo + 1, 1 << bits);
            }
        }
        assert_eq!(code_window(2, 0.0), (-1, 2));
        assert_eq!(code_window(1, 0.0), (0, 1));
        assert_eq!(code_window(2, 0.5), (-1, 2));
        assert_eq!(code_window(2, 1.0), (0, 3));
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(discretize(0.5, -10, 10), 1);
        assert_eq!(discretize(-0.5, -10, 10), -1);
        assert_eq!(discretize(1.49, -10, 10), 1);
        assert_eq!(discretize(-2.5, -1, 2), -1);
        assert_eq!(discretize(7.0, -1, 2), 2);
    }
}
