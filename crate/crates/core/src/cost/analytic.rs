//! Closed-form ledgers for one convolution layer, built from its shape without executing it.
//!
//! Conventions, with `P = C*K^2*C_out*pos`, `Q = C*C_out*pos`, `O = C_out*pos`, `R = C*H*W` and
//! `pos` the number of output positions:
//!
//! * every output position is charged the full `K^2` products, border or not;
//! * the position-independent mean term is charged per output position even though execution
//!   hoists it;
//! * additions are labelled by their operand width; a sum of `N` terms is labelled with
//!   `w + ceil(log2(N - 1))` bits (at least one extra bit once there is something to add).

use crate::qconv::{ceil_log2, ConvSpec, Pipeline};

use super::{OpKind, OpLedger};

pub const FP_BITS: u32 = 32;

fn adds_bits(terms: u64) -> u32 {
    if terms <= 1 {
        0
    } else {
        ceil_log2(terms - 1).max(1)
    }
}

/// Operand widths the ledgers label their rows with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LedgerLabels {
    pub feature: u32,
    pub weight: u32,
    pub product: u32,
    pub kernel_sum: u32,
    pub qq_bits: u32,
    pub qq_product_sum: u32,
    /// Width of the channel sum of kernel sums.
    pub channel_sum: u32,
    /// Width of the channel sum of sigma-code products.
    pub qq_channel_sum: u32,
}

impl LedgerLabels {
    pub fn for_spec(spec: &ConvSpec) -> Self {
        let feature = spec.feature_bits();
        let weight = spec.bits as u32;
        let product = feature + weight - 1;
        let kk = (spec.k * spec.k) as u64;
        let kernel_sum = product + adds_bits(kk);
        let qq_bits = spec.qq_bits as u32;
        let qq_product_sum = kernel_sum + qq_bits - 1;
        let c = spec.c_in as u64;
        Self {
            feature,
            weight,
            product,
            kernel_sum,
            qq_bits,
            qq_product_sum,
            channel_sum: kernel_sum + adds_bits(c),
            qq_channel_sum: qq_product_sum + adds_bits(c),
        }
    }
}

struct Counts {
    p: u64,
    q: u64,
    o: u64,
    r: u64,
    kk: u64,
    c: u64,
    weights: u64,
}

fn counts(spec: &ConvSpec) -> Counts {
    let (oh, ow) = spec.out_dims();
    let pos = (oh * ow) as u64;
    let (c, co, kk) = (spec.c_in as u64, spec.c_out as u64, (spec.k * spec.k) as u64);
    Counts { p: c * kk * co * pos, q: c * co * pos, o: co * pos, r: c * (spec.h * spec.w) as u64, kk, c, weights: c * co * kk }
}

/// Plain FP32 convolution: one multiply and one add per kernel tap.
pub fn reference_ledger(spec: &ConvSpec) -> OpLedger {
    let n = counts(spec);
    OpLedger::new().with(OpKind::FpMul, FP_BITS, FP_BITS, n.p).with(OpKind::FpAdd, FP_BITS, FP_BITS, n.p)
}

/// Every operand de-transformed to FP32 before an FP32 convolution.
///
/// Per tap one multiply and one accumulate (`P`); per input channel and output position one
/// scale multiply and one add (`Q`); one multiply-add per feature element to de-transform it
/// (`R`); one multiply per weight to de-transform it.
pub fn elementwise_ledger(spec: &ConvSpec) -> OpLedger {
    let n = counts(spec);
    OpLedger::new()
        .with(OpKind::FpMul, FP_BITS, FP_BITS, n.p + n.q + n.r + n.weights)
        .with(OpKind::FpAdd, FP_BITS, FP_BITS, n.p + n.q + n.r)
}

/// Integer kernel sums, de-transformed once per input channel, channel sum in FP32.
pub fn channelwise_ledger(spec: &ConvSpec) -> OpLedger {
    let n = counts(spec);
    let l = LedgerLabels::for_spec(spec);
    OpLedger::new()
        .with(OpKind::IntMul, l.feature, l.weight, n.p)
        .with(OpKind::IntAdd, l.product, l.product, (n.kk - 1) * n.q)
        .with(OpKind::IntAdd, l.kernel_sum, l.kernel_sum, n.q)
        .with(OpKind::FpAdd, FP_BITS, FP_BITS, n.q)
        .with(OpKind::FpMul, l.channel_sum, FP_BITS, n.o)
}

/// Four integer channel sums scaled by four global factors.
///
/// The feature-code and weight-code kernel sums each cost `P` multiplies and `(K^2-1)*Q` adds;
/// the per-channel sigma codes multiply the kernel sums, and the products are summed over
/// channels at the widened width.
pub fn qq_ledger(spec: &ConvSpec) -> OpLedger {
    let n = counts(spec);
    let l = LedgerLabels::for_spec(spec);
    OpLedger::new()
        .with(OpKind::IntMul, l.feature, l.weight, 2 * n.p)
        .with(OpKind::IntAdd, l.product, l.product, 2 * (n.kk - 1) * n.q)
        .with(OpKind::IntMul, l.kernel_sum, l.qq_bits, n.q)
        .with(OpKind::IntAdd, l.kernel_sum, l.kernel_sum, n.q)
        .with(OpKind::IntAdd, l.qq_product_sum, l.qq_product_sum, (n.c - 1) * n.o)
        .with(OpKind::FpMul, l.channel_sum, FP_BITS, n.o)
        .with(OpKind::FpMul, l.qq_channel_sum, FP_BITS, n.o)
        .with(OpKind::FpAdd, FP_BITS, FP_BITS, 2 * n.o)
}

pub fn pipeline_ledger(pipeline: Pipeline, spec: &ConvSpec) -> OpLedger {
    match pipeline {
        Pipeline::Reference => reference_ledger(spec),
        Pipeline::Elementwise => elementwise_ledger(spec),
        Pipeline::Channelwise => channelwise_ledger(spec),
        Pipeline::Qq => qq_ledger(spec),
    }
}

/// FP32 cost of standardizing features (per image) and weights (once, before inference).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransformOverhead {
    pub per_image: OpLedger,
    pub one_time: OpLedger,
}

impl TransformOverhead {
    pub fn feature_ops(&self) -> u128 {
        self.per_image.total_ops()
    }

    pub fn weight_ops(&self) -> u128 {
        self.one_time.total_ops()
    }
}

/// Features: per element two adds for the mean and variance sums, one subtract and one square
/// for the variance, one multiply by the reciprocal scale; per channel two divisions and a
/// square root, `C*(5*H*W + 3)` in total. Weights: `3*K^2*C*C_out`.
pub fn transform_overhead(c: u64, h: u64, w: u64, k: u64, c_out: u64) -> TransformOverhead {
    let hw = h * w;
    let per_image = OpLedger::new()
        .with(OpKind::FpAdd, FP_BITS, FP_BITS, 3 * hw * c)
        .with(OpKind::FpMul, FP_BITS, FP_BITS, 2 * hw * c)
        .with(OpKind::FpDiv, FP_BITS, FP_BITS, 2 * c)
        .with(OpKind::FpSqrt, FP_BITS, FP_BITS, c);
    let weights = k * k * c * c_out;
    let one_time = OpLedger::new().with(OpKind::FpMul, FP_BITS, FP_BITS, 2 * weights).with(OpKind::FpAdd, FP_BITS, FP_BITS, weights);
    TransformOverhead { per_image, one_time }
}
