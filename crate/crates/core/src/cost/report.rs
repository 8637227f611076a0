use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{CostError, EnergyModel, OpKind, OpLedger};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpRow {
    pub bits_a: u32,
    pub bits_b: u32,
    pub kind: OpKind,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineCost {
    pub name: String,
    pub ops: Vec<OpRow>,
    pub bops: u128,
    pub energy_pj: f64,
}

/// Per-pipeline operation counts, BOPs and energy. Row order follows the ledger key order, so
/// renderings are deterministic.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub pipelines: Vec<PipelineCost>,
}

impl CostReport {
    pub fn build<'a>(ledgers: impl IntoIterator<Item = (&'a str, &'a OpLedger)>, model: &EnergyModel) -> Result<Self, CostError> {
        let pipelines = ledgers
            .into_iter()
            .map(|(name, ledger)| {
                Ok(PipelineCost {
                    name: name.to_string(),
                    ops: ledger.entries().map(|(k, count)| OpRow { bits_a: k.bits_a, bits_b: k.bits_b, kind: k.kind, count }).collect(),
                    bops: ledger.bops()?,
                    energy_pj: model.energy_pj(ledger),
                })
            })
            .collect::<Result<_, CostError>>()?;
        Ok(Self { pipelines })
    }

    pub fn pipeline(&self, name: &str) -> Option<&PipelineCost> {
        self.pipelines.iter().find(|p| p.name == name)
    }

    pub fn to_json(&self) -> Result<String, CostError> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self, CostError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.pipelines {
            let _ = writeln!(out, "pipeline {}", p.name);
            let _ = writeln!(out, "  {:>6} {:>6}  {:<8} {:>20}", "bits_a", "bits_b", "kind", "count");
            for r in &p.ops {
                let _ = writeln!(out, "  {:>6} {:>6}  {:<8} {:>20}", r.bits_a, r.bits_b, r.kind.name(), r.count);
            }
            let _ = writeln!(out, "  bops      {}  ({:.2} G)", p.bops, p.bops as f64 / 1e9);
            let _ = writeln!(out, "  energy_pj {:?}  ({:.4} mJ)", p.energy_pj, p.energy_pj * 1e-9);
            out.push('\n');
        }
        out
    }
}
