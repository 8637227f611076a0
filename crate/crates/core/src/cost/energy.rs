//! Per-operation energy in picojoules as a function of operand width.
//!
//! Additions (and compares) grow linearly with width, multiplications (and divisions, square
//! roots) quadratically. Defaults come from published 45 nm estimates:
//!
//! | kind    | 8 bit | 32 bit |
//! |---------|-------|--------|
//! | int-add | 0.03  | 0.1    |
//! | int-mul | 0.2   | 3.1    |
//! | fp-add  |       | 0.9    |
//! | fp-mul  |       | 3.7    |
//!
//! A kind with a single anchor takes the shape of its integer counterpart, scaled to pass
//! through the anchor. Anchor files hold `kind width pJ` lines; `#` starts a comment.

use std::collections::BTreeMap;
use std::path::Path;

use super::{CostError, OpKind, OpLedger};

/// `a + b * w` (linear) or `a + b * w^2` (quadratic).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EnergyCurve {
    Linear { a: f64, b: f64 },
    Quadratic { a: f64, b: f64 },
}

impl EnergyCurve {
    pub fn at(self, width: u32) -> f64 {
        let w = width as f64;
        match self {
            Self::Linear { a, b } => a + b * w,
            Self::Quadratic { a, b } => a + b * w * w,
        }
    }

    fn scaled(self, factor: f64) -> Self {
        match self {
            Self::Linear { a, b } => Self::Linear { a: a * factor, b: b * factor },
            Self::Quadratic { a, b } => Self::Quadratic { a: a * factor, b: b * factor },
        }
    }

    fn through(quadratic: bool, (w0, e0): (u32, f64), (w1, e1): (u32, f64)) -> Self {
        let f = |w: u32| if quadratic { (w as f64).powi(2) } else { w as f64 };
        let b = (e1 - e0) / (f(w1) - f(w0));
        let a = e0 - b * f(w0);
        if quadratic {
            Self::Quadratic { a, b }
        } else {
            Self::Linear { a, b }
        }
    }
}

fn is_quadratic(kind: OpKind) -> bool {
    matches!(kind, OpKind::IntMul | OpKind::FpMul | OpKind::FpDiv | OpKind::FpSqrt)
}

fn integer_base(kind: OpKind) -> OpKind {
    if is_quadratic(kind) {
        OpKind::IntMul
    } else {
        OpKind::IntAdd
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyModel {
    curves: BTreeMap<OpKind, EnergyCurve>,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self::from_anchors(&[]).expect("default anchors are valid")
    }
}

impl EnergyModel {
    const DEFAULT_ANCHORS: [(OpKind, u32, f64); 6] = [
        (OpKind::IntAdd, 8, 0.03),
        (OpKind::IntAdd, 32, 0.1),
        (OpKind::IntMul, 8, 0.2),
        (OpKind::IntMul, 32, 3.1),
        (OpKind::FpAdd, 32, 0.9),
        (OpKind::FpMul, 32, 3.7),
    ];

    /// Builds the model from user anchors layered over the defaults: a kind mentioned in
    /// `anchors` replaces all default anchors of that kind.
    pub fn from_anchors(anchors: &[(OpKind, u32, f64)]) -> Result<Self, CostError> {
        let mut by_kind: BTreeMap<OpKind, Vec<(u32, f64)>> = BTreeMap::new();
        for &(kind, w, e) in &Self::DEFAULT_ANCHORS {
            if !anchors.iter().any(|a| a.0 == kind) {
                by_kind.entry(kind).or_default().push((w, e));
            }
        }
        for &(kind, w, e) in anchors {
            if w == 0 || !(e.is_finite() && e > 0.0) {
                return Err(CostError::InvalidModel(format!("{kind} anchor ({w} bits, {e} pJ) must have positive width and energy")));
            }
            by_kind.entry(kind).or_default().push((w, e));
        }

        let mut curves = BTreeMap::new();
        // integer curves first: single-anchor kinds borrow their shape
        for kind in [OpKind::IntAdd, OpKind::IntMul] {
            let pts = by_kind.get(&kind).cloned().unwrap_or_default();
            let curve = match pts.as_slice() {
                [p0, p1] => fit(kind, *p0, *p1)?,
                [(w, e)] => {
                    let base = Self::default_curve(kind);
                    base.scaled(e / base.at(*w))
                }
                _ => return Err(anchor_count(kind, pts.len())),
            };
            curves.insert(kind, curve);
        }
        for kind in OpKind::ALL.into_iter().filter(|k| !matches!(k, OpKind::IntAdd | OpKind::IntMul)) {
            let pts = by_kind.get(&kind).cloned().unwrap_or_default();
            let curve = match pts.as_slice() {
                [p0, p1] => fit(kind, *p0, *p1)?,
                [(w, e)] => {
                    let base = curves[&integer_base(kind)];
                    base.scaled(e / base.at(*w))
                }
                [] => match kind {
                    OpKind::FpDiv | OpKind::FpSqrt => curves[&OpKind::FpMul],
                    OpKind::Compare => curves[&OpKind::IntAdd],
                    _ => return Err(anchor_count(kind, 0)),
                },
                _ => return Err(anchor_count(kind, pts.len())),
            };
            curves.insert(kind, curve);
        }
        let model = Self { curves };
        model.validate()?;
        Ok(model)
    }

    fn default_curve(kind: OpKind) -> EnergyCurve {
        let pts: Vec<(u32, f64)> = Self::DEFAULT_ANCHORS.iter().filter(|a| a.0 == kind).map(|a| (a.1, a.2)).collect();
        EnergyCurve::through(is_quadratic(kind), pts[0], pts[1])
    }

    pub fn parse(text: &str) -> Result<Self, CostError> {
        let mut anchors = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| CostError::AnchorParse { line: idx + 1, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [kind, width, pj] = fields[..] else {
                return Err(err(format!("expected `kind width pJ`, got {line:?}")));
            };
            let kind = kind.parse::<OpKind>().map_err(|e| err(e.to_string()))?;
            let width = width.parse::<u32>().map_err(|e| err(format!("bad width {width:?}: {e}")))?;
            let pj = pj.parse::<f64>().map_err(|e| err(format!("bad energy {pj:?}: {e}")))?;
            anchors.push((kind, width, pj));
        }
        Self::from_anchors(&anchors)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CostError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn curve(&self, kind: OpKind) -> EnergyCurve {
        self.curves[&kind]
    }

    /// Energy of one operation; mixed widths use the wider operand.
    pub fn op_pj(&self, kind: OpKind, bits_a: u32, bits_b: u32) -> f64 {
        self.curves[&kind].at(bits_a.max(bits_b))
    }

    pub fn energy_pj(&self, ledger: &OpLedger) -> f64 {
        ledger.entries().map(|(k, c)| c as f64 * self.op_pj(k.kind, k.bits_a, k.bits_b)).sum()
    }

    pub fn energy_joules(&self, ledger: &OpLedger) -> f64 {
        self.energy_pj(ledger) * 1e-12
    }

    fn validate(&self) -> Result<(), CostError> {
        for (&kind, &curve) in &self.curves {
            if curve.at(1) <= 0.0 {
                return Err(CostError::InvalidModel(format!("{kind} energy is not positive at 1 bit")));
            }
            if let Some(w) = (1..64).find(|&w| curve.at(w + 1) <= curve.at(w)) {
                return Err(CostError::InvalidModel(format!("{kind} energy does not increase from {w} to {} bits", w + 1)));
            }
            if kind.is_fp() {
                let int = self.curves[&integer_base(kind)];
                if let Some(w) = (1..=64).find(|&w| curve.at(w) < int.at(w)) {
                    return Err(CostError::InvalidModel(format!("{kind} is cheaper than its integer counterpart at {w} bits")));
                }
            }
        }
        Ok(())
    }
}

fn fit(kind: OpKind, p0: (u32, f64), p1: (u32, f64)) -> Result<EnergyCurve, CostError> {
    if p0.0 == p1.0 {
        return Err(CostError::InvalidModel(format!("{kind} has two anchors at {} bits", p0.0)));
    }
    let (lo, hi) = if p0.0 < p1.0 { (p0, p1) } else { (p1, p0) };
    Ok(EnergyCurve::through(is_quadratic(kind), lo, hi))
}

fn anchor_count(kind: OpKind, n: usize) -> CostError {
    CostError::InvalidModel(format!("{kind} needs one or two anchors, got {n}"))
}
