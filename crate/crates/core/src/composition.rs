//! Functions mapping individual monitor confidences to a confidence for the
//! conjunction of their assumptions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calibration::check_fit_inputs;
use crate::data::Confidence;
use crate::error::{Error, Result};
use crate::formula::ConjunctionComposer;
use crate::metrics::Binning;
use crate::optim::{self, OptimizerSettings, Problem};

pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompositionKind {
    Product,
    Weighted,
    Power,
    Logreg,
    Bayes,
}

impl CompositionKind {
    pub const ALL: [CompositionKind; 5] = [
        CompositionKind::Product,
        CompositionKind::Weighted,
        CompositionKind::Power,
        CompositionKind::Logreg,
        CompositionKind::Bayes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CompositionKind::Product => "product",
            CompositionKind::Weighted => "weighted",
            CompositionKind::Power => "power",
            CompositionKind::Logreg => "logreg",
            CompositionKind::Bayes => "bayes",
        }
    }

    /// Display label used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            CompositionKind::Product => "Product",
            CompositionKind::Weighted => "Weighted Avg.",
            CompositionKind::Power => "Power Product",
            CompositionKind::Logreg => "LogReg",
            CompositionKind::Bayes => "Seq. Bayes",
        }
    }
}

impl fmt::Display for CompositionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CompositionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        CompositionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown composition `{s}` (expected product|weighted|power|logreg|bayes)"
                ))
            })
    }
}

fn non_empty(ms: &[f64]) -> Result<()> {
    if ms.is_empty() {
        Err(Error::Empty("monitor values"))
    } else {
        Ok(())
    }
}

pub fn product(ms: &[f64]) -> Result<Confidence> {
    non_empty(ms)?;
    Ok(Confidence::clamped(ms.iter().product()))
}

/// `(Π m_i)^n` for `n` monitors.
pub fn power_product(ms: &[f64]) -> Result<Confidence> {
    non_empty(ms)?;
    let p: f64 = ms.iter().product();
    Ok(Confidence::clamped(p.powi(ms.len() as i32)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Rejects negative entries and sums further than 1e-12 from 1.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidWeights("no weights".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidWeights(format!("negative or non-finite weight in {weights:?}")));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidWeights(format!("weights sum to {s}, not 1")));
        }
        Ok(WeightVector(weights))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        WeightVector::new(v)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Vec<f64> {
        w.0
    }
}

/// `w_i ∝ 1 / max(var_i, 1e-6)`.
pub fn inverse_variance_weights(vars: &[f64]) -> Result<WeightVector> {
    if vars.is_empty() {
        return Err(Error::Empty("variances"));
    }
    if vars.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidArgument(format!("invalid variances {vars:?}")));
    }
    let inv: Vec<f64> = vars.iter().map(|v| 1.0 / v.max(VARIANCE_FLOOR)).collect();
    let total: f64 = inv.iter().sum();
    let mut w: Vec<f64> = inv.iter().map(|x| x / total).collect();
    // absorb rounding so the sum is 1 to within an ulp or two
    let drift = 1.0 - w.iter().sum::<f64>();
    let last = w.len() - 1;
    w[last] += drift;
    WeightVector::new(w)
}

pub fn weighted_average(ms: &[f64], w: &WeightVector) -> Result<Confidence> {
    if ms.len() != w.len() {
        return Err(Error::LengthMismatch {
            left: ms.len(),
            right: w.len(),
        });
    }
    non_empty(ms)?;
    Ok(Confidence::clamped(
        ms.iter().zip(w.as_slice()).map(|(m, wi)| m * wi).sum(),
    ))
}

/// Independence assumption: joint probability is the product.
#[derive(Debug, Clone, Copy, Default)]
pub struct Product;

impl ConjunctionComposer for Product {
    fn conjoin(&self, _: &[usize], values: &[f64]) -> f64 {
        values.iter().product()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PowerProduct;

impl ConjunctionComposer for PowerProduct {
    fn conjoin(&self, _: &[usize], values: &[f64]) -> f64 {
        values.iter().product::<f64>().powi(values.len() as i32)
    }
}

/// Weighted average over the conjunction's members, with the weights
/// renormalized over that subset.
#[derive(Debug, Clone)]
pub struct WeightedAverage(pub WeightVector);

impl ConjunctionComposer for WeightedAverage {
    fn conjoin(&self, indices: &[usize], values: &[f64]) -> f64 {
        let w = self.0.as_slice();
        let total: f64 = indices.iter().map(|&i| w[i]).sum();
        if total <= 0.0 {
            return values.iter().sum::<f64>() / values.len() as f64;
        }
        indices
            .iter()
            .zip(values)
            .map(|(&i, v)| w[i] / total * v)
            .sum()
    }
}

/// `sigmoid(w0 + Σ w_i m_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
}

pub fn logreg_apply(p: &LogRegParams, ms: &[f64]) -> Result<Confidence> {
    if ms.len() != p.coefficients.len() {
        return Err(Error::LengthMismatch {
            left: ms.len(),
            right: p.coefficients.len(),
        });
    }
    let z = p.intercept
        + p.coefficients
            .iter()
            .zip(ms)
            .map(|(w, m)| w * m)
            .sum::<f64>();
    Ok(Confidence::clamped(optim::sigmoid(z)))
}

/// Fits on raw monitor values (one row per sample) against the truth of
/// the conjunction, using the same λ-weighted loss as Platt scaling.
pub fn logreg_fit(
    rows: &[Vec<f64>],
    labels: &[bool],
    lambda: f64,
    opt: &OptimizerSettings,
) -> Result<LogRegParams> {
    check_fit_inputs(rows.len(), labels, lambda)?;
    let n = rows[0].len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Shape("rows have different lengths".into()));
    }
    let features: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect())
        .collect();
    let problem = Problem {
        features: &features,
        labels,
        lambda,
    };
    let theta = optim::minimize(&problem, vec![0.0; n + 1], opt)?;
    Ok(LogRegParams {
        intercept: theta[0],
        coefficients: theta[1..].to_vec(),
        lambda,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BayesSettings {
    pub bins: usize,
    pub smoothing: f64,
    pub prior: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
}

impl Default for BayesSettings {
    fn default() -> Self {
        BayesSettings {
            bins: 10,
            smoothing: 1.0,
            prior: 0.5,
            ratio_min: 1e-3,
            ratio_max: 1e3,
        }
    }
}

/// Joint histograms of monitor outputs, overall and restricted to samples
/// where the conjunction holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointHistogram {
    pub bins: usize,
    pub dims: usize,
    pub smoothing: f64,
    pub conditional: Vec<u64>,
    pub unconditional: Vec<u64>,
    #[serde(default = "default_ratio_min")]
    pub ratio_min: f64,
    #[serde(default = "default_ratio_max")]
    pub ratio_max: f64,
}

fn default_ratio_min() -> f64 {
    1e-3
}

fn default_ratio_max() -> f64 {
    1e3
}

impl JointHistogram {
    fn cell(&self, ms: &[f64]) -> Result<usize> {
        if ms.len() != self.dims {
            return Err(Error::LengthMismatch {
                left: ms.len(),
                right: self.dims,
            });
        }
        let b = Binning::uniform(self.bins)?;
        let mut idx = 0;
        for &m in ms {
            if !(0.0..=1.0).contains(&m) {
                return Err(Error::NotAConfidence(m));
            }
            idx = idx * self.bins + b.index_of(m);
        }
        Ok(idx)
    }

    /// Smoothed `P(m | A) / P(m)` for the cell containing `ms`, unclamped.
    pub fn likelihood_ratio(&self, ms: &[f64]) -> Result<f64> {
        let i = self.cell(ms)?;
        let cells = self.conditional.len() as f64;
        let s = self.smoothing;
        let n_cond: u64 = self.conditional.iter().sum();
        let n_all: u64 = self.unconditional.iter().sum();
        let p_cond = (self.conditional[i] as f64 + s) / (n_cond as f64 + s * cells);
        let p_all = (self.unconditional[i] as f64 + s) / (n_all as f64 + s * cells);
        Ok(p_cond / p_all)
    }
}

pub fn bayes_fit(rows: &[Vec<f64>], labels: &[bool], settings: &BayesSettings) -> Result<JointHistogram> {
    if settings.bins < 2 {
        return Err(Error::InvalidArgument("histogram needs at least 2 bins".into()));
    }
    if rows.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: rows.len(),
            right: labels.len(),
        });
    }
    let dims = rows.first().ok_or(Error::Empty("histogram samples"))?.len();
    let cells = settings
        .bins
        .checked_pow(dims as u32)
        .filter(|&c| c <= 1 << 24)
        .ok_or_else(|| Error::InvalidArgument("histogram too large".into()))?;
    let mut h = JointHistogram {
        bins: settings.bins,
        dims,
        smoothing: settings.smoothing,
        conditional: vec![0; cells],
        unconditional: vec![0; cells],
        ratio_min: settings.ratio_min,
        ratio_max: settings.ratio_max,
    };
    for (r, &a) in rows.iter().zip(labels) {
        let i = h.cell(r)?;
        h.unconditional[i] += 1;
        if a {
            h.conditional[i] += 1;
        }
    }
    Ok(h)
}

/// One update `f' = clamp(f · ratio, 0, 1)` with the ratio clamped to
/// `[ratio_min, ratio_max]`.
pub fn bayes_step(hist: &JointHistogram, prior: Confidence, ms: &[f64]) -> Result<Confidence> {
    let r = hist
        .likelihood_ratio(ms)?
        .clamp(hist.ratio_min, hist.ratio_max);
    Ok(Confidence::clamped(prior.get() * r))
}

/// Runs the update along one trace starting from `prior`, returning the
/// posterior after each step.
pub fn bayes_trace(hist: &JointHistogram, prior: Confidence, steps: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut f = prior;
    steps
        .iter()
        .map(|ms| {
            f = bayes_step(hist, f, ms)?;
            Ok(f.get())
        })
        .collect()
}

/// A fitted composition ready to apply to one sample of monitor values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FittedComposition {
    Product,
    Weighted { weights: WeightVector },
    Power,
    Logreg { params: LogRegParams },
    Bayes { histogram: JointHistogram, prior: f64 },
}
