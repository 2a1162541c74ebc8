//! Closed-form error bounds for composed monitors of two assumptions, and
//! their empirical verification on synthetic probability spaces.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod synthetic;

pub use synthetic::{
    accepted_random_spaces, run_verification, verify_bound_empirically, BoundReport, CheckSpec, SpaceParams, SyntheticSpace, VerifyConfig, VerifyReport,
};

/// A bound value. Values are never capped, so `vacuous` records whether the
/// expression says nothing (reaches 1 or more).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub value: f64,
    pub vacuous: bool,
}

impl BoundValue {
    pub fn new(value: f64) -> Self {
        BoundValue {
            value,
            vacuous: value >= 1.0,
        }
    }
}

/// MCE bound `e` of a monitor and the variance of its output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorErrorSpec {
    pub e: f64,
    pub variance: f64,
}

impl MonitorErrorSpec {
    pub fn new(e: f64, variance: f64) -> Result<Self> {
        unit("e", e)?;
        if !(0.0..=0.25).contains(&variance) {
            return Err(Error::InvalidArgument(format!(
                "variance {variance} not in [0, 0.25]"
            )));
        }
        Ok(MonitorErrorSpec { e, variance })
    }
}

fn unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} = {v} not in [0, 1]")))
    }
}

/// Probability that the system is unsafe given both assumptions are
/// violated is at most `e1 + e2`, capped at 1.
pub fn safety_bound(e1: f64, e2: f64) -> Result<f64> {
    unit("e1", e1)?;
    unit("e2", e2)?;
    Ok((e1 + e2).min(1.0))
}

/// Interval for `P(A | M_C)` given `E[M | M_C] = x` and MCE bound `e`.
pub fn lemma_interval(x: f64, e: f64) -> Result<(f64, f64)> {
    unit("x", x)?;
    unit("e", e)?;
    Ok(((x - e).max(0.0), (x + e).min(1.0)))
}

pub fn ece_product_bound(s1: MonitorErrorSpec, s2: MonitorErrorSpec) -> BoundValue {
    let (e1, e2) = (s1.e, s2.e);
    let a = 4.0 * e1 * e2;
    let b = (s1.variance * s2.variance).sqrt() + e1 + e2 + e1 * e2;
    BoundValue::new(a.max(b))
}

pub fn ece_weighted_bound(e1: f64, e2: f64, w1: f64, w2: f64) -> Result<BoundValue> {
    unit("e1", e1)?;
    unit("e2", e2)?;
    if w1 < 0.0 || w2 < 0.0 || ((w1 + w2) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidWeights(format!(
            "weights ({w1}, {w2}) must be non-negative and sum to 1"
        )));
    }
    let a = e1 + e2 + e1 * e2;
    let b = w1.max(w2) + e1 + e2 - e1 * e2;
    Ok(BoundValue::new(a.max(b)))
}

/// Lower bound on `P(A1 ∧ A2 | M1·M2 = x)`.
pub fn cce_product_pointwise(x: f64, e1: f64, e2: f64) -> f64 {
    (x - e1).max(0.0) * (x - e2).max(0.0)
}

/// Largest possible overconfidence `x - P(A1 ∧ A2 | M_C = x)` of the
/// product, maximized over `x`.
pub fn cce_product_bound(e1: f64, e2: f64) -> Result<BoundValue> {
    unit("e1", e1)?;
    unit("e2", e2)?;
    let x0 = (1.0 + e1 + e2) / 2.0;
    let v = if (0.0..=1.0).contains(&x0) {
        (e1 * e1 - 2.0 * e1 * (e2 - 1.0) + (1.0 + e2) * (1.0 + e2)) / 4.0
    } else {
        e1 + e2 - e1 * e2
    };
    Ok(BoundValue::new(v))
}

/// Calibration error of the composed monitor against safety, from the
/// composed monitor's error `e1` and the safety relevance `e2`, `e3`.
pub fn ece_end_to_end(e1: f64, e2: f64, e3: f64) -> Result<f64> {
    unit("e1", e1)?;
    unit("e2", e2)?;
    unit("e3", e3)?;
    Ok((e1 + e2 + e3).min(1.0))
}

pub fn cce_end_to_end(e: f64) -> Result<f64> {
    unit("e", e)?;
    Ok(e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Theorem {
    Safety,
    Lemma,
    EceProduct,
    EceWeighted,
    CceProductPointwise,
    CceProduct,
    EceEndToEnd,
    CceEndToEnd,
}

impl Theorem {
    pub const ALL: [Theorem; 8] = [
        Theorem::Safety,
        Theorem::Lemma,
        Theorem::EceProduct,
        Theorem::EceWeighted,
        Theorem::CceProductPointwise,
        Theorem::CceProduct,
        Theorem::EceEndToEnd,
        Theorem::CceEndToEnd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Theorem::Safety => "safety",
            Theorem::Lemma => "lemma",
            Theorem::EceProduct => "ece-product",
            Theorem::EceWeighted => "ece-weighted",
            Theorem::CceProductPointwise => "cce-product-pointwise",
            Theorem::CceProduct => "cce-product",
            Theorem::EceEndToEnd => "ece-end-to-end",
            Theorem::CceEndToEnd => "cce-end-to-end",
        }
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Theorem {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Theorem::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Theorem::ALL.iter().map(|t| t.name()).collect();
                Error::Config(format!("unknown theorem `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

/// Arguments for [`evaluate_theorem`]; unused fields are ignored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundArgs {
    pub e1: f64,
    pub e2: Option<f64>,
    pub e3: Option<f64>,
    pub var1: Option<f64>,
    pub var2: Option<f64>,
    pub w1: Option<f64>,
    pub w2: Option<f64>,
    /// Confidence level for the lemma and the pointwise bound.
    pub x: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremValue {
    pub theorem: Theorem,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    pub vacuous: bool,
}

fn need(name: &str, v: Option<f64>) -> Result<f64> {
    v.ok_or_else(|| Error::InvalidArgument(format!("missing argument --{name}")))
}

pub fn evaluate_theorem(t: Theorem, a: &BoundArgs) -> Result<TheoremValue> {
    let plain = |value: f64| TheoremValue {
        theorem: t,
        value,
        upper: None,
        vacuous: value >= 1.0,
    };
    let bound = |b: BoundValue| TheoremValue {
        theorem: t,
        value: b.value,
        upper: None,
        vacuous: b.vacuous,
    };
    Ok(match t {
        Theorem::Safety => plain(safety_bound(a.e1, need("e2", a.e2)?)?),
        Theorem::Lemma => {
            let (lo, hi) = lemma_interval(need("x", a.x)?, a.e1)?;
            TheoremValue {
                theorem: t,
                value: lo,
                upper: Some(hi),
                vacuous: lo <= 0.0 && hi >= 1.0,
            }
        }
        Theorem::EceProduct => {
            let s1 = MonitorErrorSpec::new(a.e1, need("var1", a.var1)?)?;
            let s2 = MonitorErrorSpec::new(need("e2", a.e2)?, need("var2", a.var2)?)?;
            bound(ece_product_bound(s1, s2))
        }
        Theorem::EceWeighted => bound(ece_weighted_bound(
            a.e1,
            need("e2", a.e2)?,
            need("w1", a.w1)?,
            need("w2", a.w2)?,
        )?),
        Theorem::CceProductPointwise => {
            let x = need("x", a.x)?;
            unit("x", x)?;
            let e2 = need("e2", a.e2)?;
            unit("e1", a.e1)?;
            unit("e2", e2)?;
            TheoremValue {
                theorem: t,
                value: cce_product_pointwise(x, a.e1, e2),
                upper: None,
                vacuous: false,
            }
        }
        Theorem::CceProduct => bound(cce_product_bound(a.e1, need("e2", a.e2)?)?),
        Theorem::EceEndToEnd => plain(ece_end_to_end(a.e1, need("e2", a.e2)?, need("e3", a.e3)?)?),
        Theorem::CceEndToEnd => plain(cce_end_to_end(a.e1)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    fn spec(e: f64, v: f64) -> MonitorErrorSpec {
        MonitorErrorSpec::new(e, v).unwrap()
    }

    #[test]
    fn safety_examples() {
        assert_eq!(safety_bound(0.0, 0.0).unwrap(), 0.0);
        assert!(close(safety_bound(0.05, 0.1).unwrap(), 0.15));
        assert_eq!(safety_bound(0.7, 0.7).unwrap(), 1.0);
        assert!(safety_bound(1.5, 0.0).is_err());
    }

    #[test]
    fn lemma_examples() {
        let (lo, hi) = lemma_interval(0.5, 0.1).unwrap();
        assert!(close(lo, 0.4) && close(hi, 0.6));
        let (lo, hi) = lemma_interval(0.05, 0.1).unwrap();
        assert!(lo == 0.0 && close(hi, 0.15));
        let (lo, hi) = lemma_interval(0.98, 0.1).unwrap();
        assert!(close(lo, 0.88) && hi == 1.0);
    }

    #[test]
    fn ece_product_examples() {
        assert!(close(ece_product_bound(spec(0.1, 0.04), spec(0.1, 0.04)).value, 0.25));
        assert_eq!(ece_product_bound(spec(0.0, 0.0), spec(0.0, 0.0)).value, 0.0);
        let b = ece_product_bound(spec(0.5, 0.0), spec(0.5, 0.0));
        assert!(close(b.value, 1.25) && b.vacuous);
    }

    #[test]
    fn ece_weighted_examples() {
        assert!(close(ece_weighted_bound(0.1, 0.1, 0.5, 0.5).unwrap().value, 0.69));
        assert_eq!(ece_weighted_bound(0.0, 0.0, 0.5, 0.5).unwrap().value, 0.5);
        let b = ece_weighted_bound(0.0, 0.0, 1.0, 0.0).unwrap();
        assert!(b.value == 1.0 && b.vacuous);
        assert!(matches!(
            ece_weighted_bound(0.0, 0.0, 0.5, 0.6),
            Err(Error::InvalidWeights(_))
        ));
    }

    #[test]
    fn cce_examples() {
        assert!(close(cce_product_pointwise(0.5, 0.1, 0.2), 0.12));
        assert_eq!(cce_product_pointwise(0.05, 0.1, 0.2), 0.0);
        assert_eq!(cce_product_pointwise(1.0, 0.0, 0.0), 1.0);
        assert!(close(cce_product_bound(0.0, 0.0).unwrap().value, 0.25));
        assert!(close(cce_product_bound(0.1, 0.2).unwrap().value, 0.4025));
        assert_eq!(cce_product_bound(1.0, 1.0).unwrap().value, 1.0);
    }

    #[test]
    fn end_to_end_examples() {
        assert!(close(ece_end_to_end(0.05, 0.05, 0.1).unwrap(), 0.2));
        assert_eq!(ece_end_to_end(0.0, 0.0, 0.0).unwrap(), 0.0);
        assert_eq!(cce_end_to_end(0.3).unwrap(), 0.3);
    }

    #[test]
    fn theorem_names_parse() {
        for t in Theorem::ALL {
            assert_eq!(t.name().parse::<Theorem>().unwrap(), t);
        }
        assert!("ece".parse::<Theorem>().is_err());
        let args = BoundArgs {
            e1: 0.1,
            e2: Some(0.1),
            var1: Some(0.04),
            var2: Some(0.04),
            ..Default::default()
        };
        assert!(close(evaluate_theorem(Theorem::EceProduct, &args).unwrap().value, 0.25));
        assert!(evaluate_theorem(Theorem::EceWeighted, &args).is_err());
    }

    #[test]
    fn perfect_monitors_give_geometric_mean_of_variances() {
        for (v1, v2) in [(0.01, 0.04), (0.2, 0.05), (0.0, 0.1)] {
            let b = ece_product_bound(spec(0.0, v1), spec(0.0, v2));
            assert!(close(b.value, (v1 * v2).sqrt()));
        }
    }

    proptest! {
        #[test]
        fn corollary_is_max_of_pointwise_gap(e1 in 0.0f64..=1.0, e2 in 0.0f64..=1.0) {
            let grid = 200_000;
            let best = (0..=grid)
                .map(|i| {
                    let x = i as f64 / grid as f64;
                    x - cce_product_pointwise(x, e1, e2)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            let b = cce_product_bound(e1, e2).unwrap().value;
            // the dense grid lands within (1/grid)^2 of the vertex
            prop_assert!(b >= best - 1e-9, "bound {b} below grid max {best}");
            prop_assert!(b <= best + 1e-9 || (1.0 + e1 + e2) / 2.0 > 1.0, "bound {b} above grid max {best}");
        }

        #[test]
        fn bounds_monotone(e1 in 0.0f64..0.9, e2 in 0.0f64..0.9, d in 0.0f64..0.1, v1 in 0.0f64..0.25, v2 in 0.0f64..0.25, w in 0.0f64..=1.0) {
            let up = e1 + d;
            prop_assert!(safety_bound(up, e2).unwrap() >= safety_bound(e1, e2).unwrap());
            prop_assert!(ece_product_bound(spec(up, v1), spec(e2, v2)).value >= ece_product_bound(spec(e1, v1), spec(e2, v2)).value);
            prop_assert!(ece_weighted_bound(up, e2, w, 1.0 - w).unwrap().value >= ece_weighted_bound(e1, e2, w, 1.0 - w).unwrap().value - 1e-15);
            prop_assert!(cce_product_bound(up, e2).unwrap().value >= cce_product_bound(e1, e2).unwrap().value - 1e-15);
            prop_assert!(ece_end_to_end(up, e2, 0.0).unwrap() >= ece_end_to_end(e1, e2, 0.0).unwrap());
        }
    }
}
