//! Platt scaling with a weighted cross-entropy objective whose weight
//! `lambda` trades off under- against overconfidence.

use serde::{Deserialize, Serialize};

use crate::data::Confidence;
use crate::error::{Error, Result};
use crate::optim::{self, OptimizerSettings, Problem};

pub const DEFAULT_EPS: f64 = 1e-6;

/// `m' = 1 / (1 + exp(c·LO(m) + d))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub c: f64,
    pub d: f64,
    pub lambda: f64,
}

impl CalibrationParams {
    pub fn identity() -> Self {
        CalibrationParams {
            c: -1.0,
            d: 0.0,
            lambda: 0.5,
        }
    }

    pub fn apply(&self, m: Confidence) -> Confidence {
        platt_apply(self, m)
    }

    pub fn apply_all(&self, ms: &[f64]) -> Vec<f64> {
        ms.iter()
            .map(|&m| platt_value(self, m, DEFAULT_EPS))
            .collect()
    }
}

/// `ln(m / (1 - m))` after clipping `m` into `[eps, 1 - eps]`.
pub fn log_odds(m: Confidence, eps: f64) -> f64 {
    lo(m.get(), eps)
}

fn lo(m: f64, eps: f64) -> f64 {
    let m = m.clamp(eps, 1.0 - eps);
    (m / (1.0 - m)).ln()
}

fn platt_value(p: &CalibrationParams, m: f64, eps: f64) -> f64 {
    optim::sigmoid(-(p.c * lo(m, eps) + p.d))
}

pub fn platt_apply(p: &CalibrationParams, m: Confidence) -> Confidence {
    Confidence::clamped(platt_value(p, m.get(), DEFAULT_EPS))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlattSettings {
    pub eps: f64,
    pub optimizer: OptimizerSettings,
}

impl Default for PlattSettings {
    fn default() -> Self {
        PlattSettings {
            eps: DEFAULT_EPS,
            optimizer: OptimizerSettings::default(),
        }
    }
}

/// Mean weighted cross-entropy of the transformed confidences:
/// `-(1/N) Σ (1-λ)·a·ln m' + λ·(1-a)·ln(1-m')`.
pub fn platt_loss(ms: &[f64], labels: &[bool], params: &CalibrationParams, eps: f64) -> f64 {
    let features = platt_features(ms, eps);
    Problem {
        features: &features,
        labels,
        lambda: params.lambda,
    }
    .loss(&[-params.c, -params.d])
}

/// Gradient of [`platt_loss`] with respect to `(c, d)`.
pub fn platt_gradient(ms: &[f64], labels: &[bool], params: &CalibrationParams, eps: f64) -> [f64; 2] {
    let features = platt_features(ms, eps);
    let g = Problem {
        features: &features,
        labels,
        lambda: params.lambda,
    }
    .gradient(&[-params.c, -params.d]);
    [-g[0], -g[1]]
}

fn platt_features(ms: &[f64], eps: f64) -> Vec<Vec<f64>> {
    ms.iter().map(|&m| vec![lo(m, eps), 1.0]).collect()
}

pub(crate) fn check_fit_inputs(n: usize, labels: &[bool], lambda: f64) -> Result<()> {
    if n != labels.len() {
        return Err(Error::LengthMismatch {
            left: n,
            right: labels.len(),
        });
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} not in [0, 1]")));
    }
    if n < 2 {
        return Err(Error::DegenerateFit(format!("need at least 2 samples, found {n}")));
    }
    let pos = labels.iter().filter(|&&a| a).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::DegenerateFit("labels contain a single class".into()));
    }
    Ok(())
}

/// Fits `(c, d)` from the identity starting point.
pub fn platt_fit(
    ms: &[f64],
    labels: &[bool],
    lambda: f64,
    settings: &PlattSettings,
) -> Result<CalibrationParams> {
    check_fit_inputs(ms.len(), labels, lambda)?;
    let features = platt_features(ms, settings.eps);
    let problem = Problem {
        features: &features,
        labels,
        lambda,
    };
    let theta = optim::minimize(&problem, vec![1.0, 0.0], &settings.optimizer)?;
    Ok(CalibrationParams {
        c: -theta[0],
        d: -theta[1],
        lambda,
    })
}
