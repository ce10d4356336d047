use std::fmt;
use std::str::FromStr;

use super::HeadError;

/// Probabilities are clamped to `[PROB_FLOOR, 1]` before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// Binary cross-entropy on the positive-class probability `p[1]`; needs K = 2.
    Binary,
    /// Sparse categorical cross-entropy `-ln p[label]`.
    Categorical,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Binary => "binary",
            LossKind::Categorical => "categorical",
        }
    }

    pub(crate) fn check(self, classes: usize) -> Result<(), HeadError> {
        match self {
            LossKind::Binary if classes != 2 => {
                Err(HeadError::LossKindMismatch { kind: self, needed: 2, classes })
            }
            LossKind::Categorical if classes < 2 => {
                Err(HeadError::LossKindMismatch { kind: self, needed: 2, classes })
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = HeadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binary" => Ok(LossKind::Binary),
            "categorical" => Ok(LossKind::Categorical),
            other => Err(HeadError::InvalidHyper(format!("unknown loss kind {other:?}"))),
        }
    }
}

/// Whether `p[label]` sits in a clamped region where the loss is flat:
/// below the floor, or within the floor of 1.
fn saturated(p_label: f64) -> bool {
    !(PROB_FLOOR..=1.0 - PROB_FLOOR).contains(&p_label)
}

pub fn loss(probs: &[f64], label: usize, kind: LossKind) -> Result<f64, HeadError> {
    kind.check(probs.len())?;
    if label >= probs.len() {
        return Err(HeadError::LabelOutOfRange { label, classes: probs.len() });
    }
    if probs[label] > 1.0 - PROB_FLOOR {
        return Ok(0.0);
    }
    let clamp = |p: f64| p.clamp(PROB_FLOOR, 1.0);
    Ok(match kind {
        LossKind::Categorical => -clamp(probs[label]).ln(),
        LossKind::Binary => {
            let y = label as f64;
            let p = probs[1];
            -(y * clamp(p).ln() + (1.0 - y) * clamp(1.0 - p).ln())
        }
    })
}

/// Gradient of [`loss`] with respect to the softmax logits.
///
/// Both kinds reduce to `p - onehot(label)`: with a 2-way softmax,
/// `1 - p[1] = p[0]`. Zero in the clamped regions.
pub(crate) fn logit_grad(probs: &[f64], label: usize) -> Vec<f64> {
    if saturated(probs[label]) {
        return vec![0.0; probs.len()];
    }
    let mut g = probs.to_vec();
    g[label] -= 1.0;
    g
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
