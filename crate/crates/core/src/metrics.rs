//! Tensor comparison: MSE, PSNR and max-abs error.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Tensor;

/// Reported when the error is (numerically) zero.
pub const PSNR_CAP_DB: f64 = 300.0;
pub const DEFAULT_PEAK: f64 = 255.0;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("cannot compare shapes {0:?} and {1:?}")]
    Shape(Vec<usize>, Vec<usize>),
    #[error("peak must be positive and finite, got {0}")]
    Peak(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub mse: f64,
    pub psnr_db: f64,
    pub max_abs: f64,
    pub peak: f64,
}

pub fn compare(a: &Tensor, b: &Tensor, peak: f64) -> Result<CompareReport, MetricsError> {
    if a.shape() != b.shape() {
        return Err(MetricsError::Shape(a.shape().to_vec(), b.shape().to_vec()));
    }
    if !(peak.is_finite() && peak > 0.0) {
        return Err(MetricsError::Peak(peak));
    }
    let (mut sse, mut max_abs) = (0.0f64, 0.0f64);
    for (x, y) in a.data().iter().zip(b.data()) {
        let d = (x - y).abs();
        sse += d * d;
        max_abs = max_abs.max(d);
    }
    let mse = sse / a.len() as f64;
    let psnr_db = if mse < 1e-30 { PSNR_CAP_DB } else { (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB) };
    Ok(CompareReport { mse, psnr_db, max_abs, peak })
}

/// `max|a - b| / max|b|`; 0 when both are all zeros.
pub fn max_relative_deviation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if diff == 0.0 {
        0.0
    } else {
        diff / scale.max(f64::MIN_POSITIVE)
    }
}
