//! Operation ledgers, BOPs, FP transform overhead and energy estimates.
//!
//! A ledger is a multiset of arithmetic operations keyed by the two operand widths and the
//! operation kind. BOPs weight every operation by `bits_a * bits_b`; FP32 operations count as
//! `(32, 32)`.

mod analytic;
mod energy;
mod report;

pub use analytic::{
    channelwise_ledger, elementwise_ledger, pipeline_ledger, qq_ledger, reference_ledger, transform_overhead, LedgerLabels,
    TransformOverhead, FP_BITS,
};
pub use energy::{EnergyCurve, EnergyModel};
pub use report::{CostReport, OpRow, PipelineCost};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CostError {
    #[error("BOPs total overflows 128 bits")]
    Overflow,
    #[error("unknown operation kind {0:?}")]
    UnknownKind(String),
    #[error("energy anchors line {line}: {message}")]
    AnchorParse { line: usize, message: String },
    #[error("energy model invalid: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OpKind {
    IntMul,
    IntAdd,
    FpMul,
    FpAdd,
    FpDiv,
    FpSqrt,
    Compare,
}

impl OpKind {
    pub const ALL: [OpKind; 7] = [Self::IntMul, Self::IntAdd, Self::FpMul, Self::FpAdd, Self::FpDiv, Self::FpSqrt, Self::Compare];

    pub fn name(self) -> &'static str {
        match self {
            Self::IntMul => "int-mul",
            Self::IntAdd => "int-add",
            Self::FpMul => "fp-mul",
            Self::FpAdd => "fp-add",
            Self::FpDiv => "fp-div",
            Self::FpSqrt => "fp-sqrt",
            Self::Compare => "compare",
        }
    }

    pub fn is_fp(self) -> bool {
        matches!(self, Self::FpMul | Self::FpAdd | Self::FpDiv | Self::FpSqrt)
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpKind {
    type Err = CostError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| CostError::UnknownKind(s.to_string()))
    }
}

/// Operand widths are stored with `bits_a <= bits_b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OpKey {
    pub bits_a: u32,
    pub bits_b: u32,
    pub kind: OpKind,
}

impl OpKey {
    pub fn new(kind: OpKind, a: u32, b: u32) -> Self {
        Self { bits_a: a.min(b), bits_b: a.max(b), kind }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OpLedger {
    counts: BTreeMap<OpKey, u64>,
}

impl OpLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `count` operations; zero counts leave the ledger untouched.
    ///
    /// Panics if a single entry exceeds `u64::MAX`, which no real layer comes near.
    pub fn add(&mut self, kind: OpKind, bits_a: u32, bits_b: u32, count: u64) {
        if count == 0 {
            return;
        }
        let slot = self.counts.entry(OpKey::new(kind, bits_a, bits_b)).or_insert(0);
        *slot = slot.checked_add(count).expect("operation count overflows u64");
    }

    pub fn with(mut self, kind: OpKind, bits_a: u32, bits_b: u32, count: u64) -> Self {
        self.add(kind, bits_a, bits_b, count);
        self
    }

    pub fn merge(&mut self, other: &OpLedger) {
        for (key, &count) in &other.counts {
            self.add(key.kind, key.bits_a, key.bits_b, count);
        }
    }

    pub fn merged(mut self, other: &OpLedger) -> Self {
        self.merge(other);
        self
    }

    pub fn count(&self, kind: OpKind, bits_a: u32, bits_b: u32) -> u64 {
        self.counts.get(&OpKey::new(kind, bits_a, bits_b)).copied().unwrap_or(0)
    }

    /// All operations at the given widths, whatever their kind.
    pub fn count_at(&self, bits_a: u32, bits_b: u32) -> u64 {
        let (a, b) = (bits_a.min(bits_b), bits_a.max(bits_b));
        self.counts.iter().filter(|(k, _)| k.bits_a == a && k.bits_b == b).map(|(_, &c)| c).sum()
    }

    pub fn entries(&self) -> impl Iterator<Item = (OpKey, u64)> + '_ {
        self.counts.iter().map(|(&k, &c)| (k, c))
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total_ops(&self) -> u128 {
        self.counts.values().map(|&c| c as u128).sum()
    }

    /// `sum(count * bits_a * bits_b)`.
    pub fn bops(&self) -> Result<u128, CostError> {
        self.counts.iter().try_fold(0u128, |acc, (k, &c)| {
            (c as u128)
                .checked_mul(k.bits_a as u128 * k.bits_b as u128)
                .and_then(|v| acc.checked_add(v))
                .ok_or(CostError::Overflow)
        })
    }
}
