//! Step sizes `s(n)` in standardized units.
//!
//! The default table holds the MSE-optimal steps of a symmetric `2^n`-level uniform quantizer
//! for a unit Gaussian. Other distributions are loaded from text files:
//!
//! ```text
//! # comments start with '#'
//! distribution laplacian
//! 1 1.414
//! 2 1.087
//! ```
//!
//! Missing bit-widths are an error; nothing is interpolated.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::QuantError;

#[derive(Clone, Debug, PartialEq)]
pub struct StepSizeTable {
    distribution: String,
    entries: BTreeMap<u8, f64>,
}

impl Default for StepSizeTable {
    fn default() -> Self {
        Self::gaussian()
    }
}

impl StepSizeTable {
    pub fn gaussian() -> Self {
        let entries = [(1, 1.596), (2, 0.996), (3, 0.586), (4, 0.335), (8, 0.031)].into_iter().collect();
        Self { distribution: "gaussian".into(), entries }
    }

    pub fn new(distribution: impl Into<String>, entries: impl IntoIterator<Item = (u8, f64)>) -> Result<Self, QuantError> {
        let distribution = distribution.into();
        let mut map = BTreeMap::new();
        for (bits, step) in entries {
            if !(1..=8).contains(&bits) {
                return Err(QuantError::TableInvariant(format!("bit-width {bits} outside 1..=8")));
            }
            if !(step.is_finite() && step > 0.0) {
                return Err(QuantError::TableInvariant(format!("s({bits}) = {step} is not a positive number")));
            }
            if map.insert(bits, step).is_some() {
                return Err(QuantError::TableInvariant(format!("duplicate entry for {bits} bits")));
            }
        }
        if map.is_empty() {
            return Err(QuantError::TableInvariant("table is empty".into()));
        }
        let steps: Vec<(u8, f64)> = map.iter().map(|(&b, &s)| (b, s)).collect();
        if let Some(w) = steps.windows(2).find(|w| w[1].1 >= w[0].1) {
            return Err(QuantError::TableInvariant(format!(
                "step sizes must strictly decrease with bit-width: s({}) = {} but s({}) = {}",
                w[0].0, w[0].1, w[1].0, w[1].1
            )));
        }
        Ok(Self { distribution, entries: map })
    }

    pub fn distribution(&self) -> &str {
        &self.distribution
    }

    pub fn step(&self, bits: u8) -> Result<f64, QuantError> {
        self.entries
            .get(&bits)
            .copied()
            .ok_or_else(|| QuantError::UnknownBitWidth { bits, distribution: self.distribution.clone() })
    }

    pub fn entries(&self) -> impl Iterator<Item = (u8, f64)> + '_ {
        self.entries.iter().map(|(&b, &s)| (b, s))
    }

    pub fn parse(text: &str) -> Result<Self, QuantError> {
        let mut distribution = None;
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| QuantError::TableParse { line: line_no, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields[0] == "distribution" {
                if distribution.is_some() {
                    return Err(err("second distribution header".into()));
                }
                if fields.len() != 2 {
                    return Err(err("expected `distribution <name>`".into()));
                }
                distribution = Some(fields[1].to_string());
                continue;
            }
            if distribution.is_none() {
                return Err(err("entries must follow a `distribution <name>` header".into()));
            }
            if fields.len() != 2 {
                return Err(err(format!("expected `<bits> <step>`, got {line:?}")));
            }
            let bits = fields[0].parse::<u8>().map_err(|e| err(format!("bad bit-width {:?}: {e}", fields[0])))?;
            let step = fields[1].parse::<f64>().map_err(|e| err(format!("bad step {:?}: {e}", fields[1])))?;
            entries.push((bits, step));
        }
        let distribution = distribution.ok_or(QuantError::TableParse { line: 0, message: "missing distribution header".into() })?;
        Self::new(distribution, entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, QuantError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("distribution {}\n", self.distribution);
        for (bits, step) in self.entries() {
            let _ = writeln!(out, "{bits} {step}");
        }
        out
    }
}

/// Mean squared error of the symmetric `2^bits`-level midrise quantizer with levels
/// `(k + 1/2) * step`, `k` in `[-2^(bits-1), 2^(bits-1) - 1]`. This is the quantizer family the
/// Gaussian table is optimal for.
pub fn midrise_mse(samples: &[f64], bits: u8, step: f64) -> f64 {
    assert!((1..=16).contains(&bits) && step > 0.0 && !samples.is_empty());
    let half = (1i64 << (bits - 1)) as f64;
    let sse: f64 = samples
        .iter()
        .map(|&x| {
            let k = (x / step).floor().clamp(-half, half - 1.0);
            let q = (k + 0.5) * step;
            (x - q) * (x - q)
        })
        .sum();
    sse / samples.len() as f64
}

/// Brute-force MSE-minimizing step for `samples` at `bits`: a coarse log-spaced scan followed
/// by golden-section refinement. Used to derive tables for non-Gaussian distributions.
pub fn fit_uniform_step(samples: &[f64], bits: u8) -> f64 {
    let rms = (samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64).sqrt();
    let (lo, hi) = (rms * 1e-3, rms * 4.0);
    let grid: usize = 200;
    let ratio = (hi / lo).powf(1.0 / grid as f64);
    let candidates: Vec<f64> = (0..=grid).map(|i| lo * ratio.powi(i as i32)).collect();
    let best = (0..candidates.len())
        .min_by(|&a, &b| midrise_mse(samples, bits, candidates[a]).total_cmp(&midrise_mse(samples, bits, candidates[b])))
        .expect("non-empty grid");
    let mut a = candidates[best.saturating_sub(1)];
    let mut b = candidates[(best + 1).min(grid)];
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if midrise_mse(samples, bits, c) <= midrise_mse(samples, bits, d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}
