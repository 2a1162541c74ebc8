use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl HyperBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Shape(format!(
                "box bounds of length {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a <= b)) {
            return Err(Error::InvalidArgument(format!("empty box {lo:?}..{hi:?}")));
        }
        Ok(HyperBox { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    pub fn contains_box(&self, other: &HyperBox) -> bool {
        other.dim() == self.dim()
            && (0..self.dim()).all(|i| self.lo[i] <= other.lo[i] && other.hi[i] <= self.hi[i])
    }
}

/// Membership test over an (initial state, parameter) vector: a union of
/// boxes inside a declared domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionPredicate {
    pub domain: HyperBox,
    pub boxes: Vec<HyperBox>,
}

impl AssumptionPredicate {
    pub fn new(domain: HyperBox, boxes: Vec<HyperBox>) -> Result<Self> {
        if let Some(b) = boxes.iter().find(|b| !domain.contains_box(b)) {
            return Err(Error::InvalidArgument(format!(
                "box {:?}..{:?} leaves the domain",
                b.lo, b.hi
            )));
        }
        Ok(AssumptionPredicate { domain, boxes })
    }

    pub fn everything(domain: HyperBox) -> Self {
        AssumptionPredicate {
            boxes: vec![domain.clone()],
            domain,
        }
    }

    pub fn nothing(domain: HyperBox) -> Self {
        AssumptionPredicate {
            domain,
            boxes: Vec::new(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.boxes.iter().any(|b| b.contains(x))
    }

    /// Fraction of the domain's volume covered, assuming disjoint boxes.
    pub fn volume_fraction(&self) -> f64 {
        let vol = |b: &HyperBox| b.lo.iter().zip(&b.hi).map(|(a, c)| c - a).product::<f64>();
        let total = vol(&self.domain);
        if total <= 0.0 {
            return 0.0;
        }
        self.boxes.iter().map(vol).sum::<f64>() / total
    }
}
