//! Accumulator widths for the integer stages and the audit that checks them.
//!
//! A `w`-bit site holds values in `(-2^(w-1), 2^(w-1)]`, the same half-open window the
//! quantizers emit codes in. Under that convention:
//!
//! * an `a`-bit by `b`-bit product needs `a + b - 1` bits;
//! * a sum of `N` terms of `w` bits needs `w + ceil(log2 N)` bits (unchanged for `N = 1`).

use std::fmt;

use serde::Serialize;

use super::{ConvError, ConvSpec};

pub fn ceil_log2(n: u64) -> u32 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}

pub fn product_width(a: u32, b: u32) -> u32 {
    a + b - 1
}

pub fn sum_width(w: u32, terms: u64) -> u32 {
    w + ceil_log2(terms)
}

/// Whether `v` lies in `(-2^(bits-1), 2^(bits-1)]`; a 0-bit site only holds 0.
pub fn fits_width(v: i64, bits: u32) -> bool {
    if bits == 0 {
        return v == 0;
    }
    if bits > 64 {
        return true;
    }
    let half = 1i128 << (bits - 1);
    (v as i128) > -half && (v as i128) <= half
}

/// Integer sites of the channel-wise and QQ pipelines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Site {
    /// Feature code operand.
    FeatureCode,
    /// Weight code operand.
    WeightCode,
    /// Feature code times weight code.
    Product,
    /// `KS`: products summed over the in-bounds `K x K` window.
    KernelSum,
    /// `WS`: weight codes summed over the in-bounds window.
    WeightSum,
    /// Quantized mean and sigma codes.
    QqCode,
    /// Sigma code times `KS`.
    QqProduct,
    /// Channel sum of sigma code times `KS`.
    QqSigmaSum,
    /// Channel sum of `KS`.
    QqKernelSum,
    /// Mean code times `WS`.
    QqMuProduct,
    /// Channel sum of mean code times `WS`.
    QqMuSum,
    /// Channel sum of `WS`.
    QqWeightSum,
}

impl Site {
    pub const COUNT: usize = 12;
    pub const ALL: [Site; Self::COUNT] = [
        Self::FeatureCode,
        Self::WeightCode,
        Self::Product,
        Self::KernelSum,
        Self::WeightSum,
        Self::QqCode,
        Self::QqProduct,
        Self::QqSigmaSum,
        Self::QqKernelSum,
        Self::QqMuProduct,
        Self::QqMuSum,
        Self::QqWeightSum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::FeatureCode => "feature-code",
            Self::WeightCode => "weight-code",
            Self::Product => "product",
            Self::KernelSum => "kernel-sum",
            Self::WeightSum => "weight-sum",
            Self::QqCode => "qq-code",
            Self::QqProduct => "qq-product",
            Self::QqSigmaSum => "qq-sigma-sum",
            Self::QqKernelSum => "qq-kernel-sum",
            Self::QqMuProduct => "qq-mu-product",
            Self::QqMuSum => "qq-mu-sum",
            Self::QqWeightSum => "qq-weight-sum",
        }
    }

    pub fn is_qq(self) -> bool {
        self >= Self::QqCode
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Planned width per [`Site`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WidthPlan {
    bits: [u32; Site::COUNT],
}

impl WidthPlan {
    pub fn bits(&self, site: Site) -> u32 {
        self.bits[site as usize]
    }

    /// The same plan with one site overridden; used to under-plan on purpose.
    pub fn with_site(mut self, site: Site, bits: u32) -> Self {
        self.bits[site as usize] = bits;
        self
    }

    pub fn product_bits(&self) -> u32 {
        self.bits(Site::Product)
    }

    pub fn kernel_sum_bits(&self) -> u32 {
        self.bits(Site::KernelSum)
    }

    pub fn qq_product_bits(&self) -> u32 {
        self.bits(Site::QqProduct)
    }

    pub fn qq_channel_sum_bits(&self) -> u32 {
        self.bits(Site::QqSigmaSum)
    }

    pub fn sites(&self) -> impl Iterator<Item = (Site, u32)> + '_ {
        Site::ALL.into_iter().map(|s| (s, self.bits(s)))
    }
}

pub fn plan_widths(spec: &ConvSpec) -> WidthPlan {
    let kk = (spec.k * spec.k) as u64;
    let c = spec.c_in as u64;
    let m = spec.qq_bits as u32;
    let feature = spec.feature_bits();
    let weight = spec.bits as u32;
    let product = product_width(feature, weight);
    let kernel_sum = sum_width(product, kk);
    let weight_sum = sum_width(weight, kk);
    let qq_product = product_width(kernel_sum, m);
    let qq_mu_product = product_width(weight_sum, m);

    let mut bits = [0; Site::COUNT];
    for (site, b) in [
        (Site::FeatureCode, feature),
        (Site::WeightCode, weight),
        (Site::Product, product),
        (Site::KernelSum, kernel_sum),
        (Site::WeightSum, weight_sum),
        (Site::QqCode, m),
        (Site::QqProduct, qq_product),
        (Site::QqSigmaSum, sum_width(qq_product, c)),
        (Site::QqKernelSum, sum_width(kernel_sum, c)),
        (Site::QqMuProduct, qq_mu_product),
        (Site::QqMuSum, sum_width(qq_mu_product, c)),
        (Site::QqWeightSum, sum_width(weight_sum, c)),
    ] {
        bits[site as usize] = b;
    }
    WidthPlan { bits }
}

/// Running min and max per site.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct RangeTracker {
    ranges: [(i64, i64); Site::COUNT],
}

impl Default for RangeTracker {
    fn default() -> Self {
        Self { ranges: [(i64::MAX, i64::MIN); Site::COUNT] }
    }
}

impl RangeTracker {
    #[cfg(test)]
    pub(crate) fn observe(&mut self, site: Site, v: i64) {
        self.observe_range(site, v, v);
    }

    pub(crate) fn observe_range(&mut self, site: Site, lo: i64, hi: i64) {
        let r = &mut self.ranges[site as usize];
        r.0 = r.0.min(lo);
        r.1 = r.1.max(hi);
    }

    pub(crate) fn merge(&mut self, other: &RangeTracker) {
        for site in Site::ALL {
            let (lo, hi) = other.ranges[site as usize];
            self.observe_range(site, lo, hi);
        }
    }

    /// Audit against `plan`; the first violating site (in [`Site::ALL`] order) is the error.
    pub(crate) fn audit(&self, plan: &WidthPlan) -> Result<WidthAudit, ConvError> {
        let mut sites = Vec::new();
        for site in Site::ALL {
            let (min, max) = self.ranges[site as usize];
            if min > max {
                continue;
            }
            let bits = plan.bits(site);
            for v in [min, max] {
                if !fits_width(v, bits) {
                    return Err(ConvError::Overflow { site, bits, value: v });
                }
            }
            sites.push(SiteRange { site, bits, min, max });
        }
        Ok(WidthAudit { sites })
    }
}

/// Observed extremes of one site next to its planned width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SiteRange {
    pub site: Site,
    pub bits: u32,
    pub min: i64,
    pub max: i64,
}

impl SiteRange {
    /// Smallest width in the planning convention that holds both extremes.
    pub fn needed_bits(&self) -> u32 {
        (0..=64).find(|&b| fits_width(self.min, b) && fits_width(self.max, b)).unwrap_or(65)
    }
}

/// Sites that saw at least one value, all within plan.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct WidthAudit {
    pub sites: Vec<SiteRange>,
}

impl WidthAudit {
    pub fn site(&self, site: Site) -> Option<&SiteRange> {
        self.sites.iter().find(|s| s.site == site)
    }
}
