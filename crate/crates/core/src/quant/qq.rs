//! Second-level quantization of the per-channel means and standard deviations, so that the
//! channel sum of a convolution can stay in integers.

use super::{code_window, discretize, population_stats, QuantError, StepSizeTable, SIGMA_FLOOR};

/// `m`-bit codes for the channel means and sigmas, each vector with its own location and scale.
#[derive(Clone, Debug, PartialEq)]
pub struct QQParams {
    pub bits: u8,
    pub step: f64,
    pub mu_codes: Vec<i32>,
    pub sigma_codes: Vec<i32>,
    pub mu_mean: f64,
    /// 0 when the means are all equal (or there is one channel); reconstruction is then exact.
    pub mu_sd: f64,
    pub sigma_mean: f64,
    pub sigma_sd: f64,
}

impl QQParams {
    pub fn channels(&self) -> usize {
        self.mu_codes.len()
    }

    pub fn reconstruct_mu(&self, c: usize) -> f64 {
        self.mu_sd * self.step * self.mu_codes[c] as f64 + self.mu_mean
    }

    pub fn reconstruct_sigma(&self, c: usize) -> f64 {
        self.sigma_sd * self.step * self.sigma_codes[c] as f64 + self.sigma_mean
    }

    pub fn window(&self) -> (i32, i32) {
        code_window(self.bits, 0.0)
    }
}

fn standardize_vector(values: &[f64], bits: u8, step: f64) -> (f64, f64, Vec<i32>) {
    let (mean, sd) = population_stats(values.iter().copied());
    if values.len() == 1 || sd < SIGMA_FLOOR {
        return (mean, 0.0, vec![0; values.len()]);
    }
    let (lo, hi) = code_window(bits, 0.0);
    let codes = values.iter().map(|&v| discretize((v - mean) / (sd * step), lo, hi)).collect();
    (mean, sd, codes)
}

/// Quantizes channel means and sigmas to `bits` bits with an unshifted window.
///
/// A reconstructed sigma may never fall below [`SIGMA_FLOOR`]: such codes are raised to the
/// smallest code of the window whose reconstruction clears the floor.
pub fn quantize_qq(mu: &[f64], sigma: &[f64], bits: u8, table: &StepSizeTable) -> Result<QQParams, QuantError> {
    if mu.len() != sigma.len() {
        return Err(QuantError::LengthMismatch(mu.len(), sigma.len()));
    }
    if mu.is_empty() {
        return Err(QuantError::InvalidParameter("need at least one channel".into()));
    }
    if let Some(v) = mu.iter().chain(sigma).find(|v| !v.is_finite()) {
        return Err(QuantError::InvalidParameter(format!("non-finite channel parameter {v}")));
    }
    let step = table.step(bits)?;
    let (mu_mean, mu_sd, mu_codes) = standardize_vector(mu, bits, step);
    let (sigma_mean, sigma_sd, mut sigma_codes) = standardize_vector(sigma, bits, step);

    let (lo, hi) = code_window(bits, 0.0);
    let level = |k: i32| sigma_sd * step * k as f64 + sigma_mean;
    for code in &mut sigma_codes {
        if level(*code) < SIGMA_FLOOR {
            *code = (lo..=hi).find(|&k| level(k) >= SIGMA_FLOOR).unwrap_or(hi);
        }
    }
    Ok(QQParams { bits, step, mu_codes, sigma_codes, mu_mean, mu_sd, sigma_mean, sigma_sd })
}
