//! Weighted-cross-entropy logistic fitting shared by Platt scaling and the
//! logistic-regression composition.
//!
//! Per-sample loss with logit `z`:
//! `(1-λ)·a·softplus(-z) + λ·(1-a)·softplus(z)`, averaged over samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Damped Newton steps with backtracking.
    #[default]
    Newton,
    /// Steepest descent with Armijo backtracking.
    GradientDescent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSettings {
    pub method: Method,
    /// Stop when the gradient's infinity norm drops below this.
    pub tolerance: f64,
    /// Newton only: also stop when the predicted decrease `gᵀH⁻¹g / 2`
    /// falls below this times `max(1, loss)`. Large samples can hold the
    /// gradient above `tolerance` through rounding alone.
    pub decrement_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            method: Method::Newton,
            tolerance: 1e-8,
            decrement_tolerance: 1e-14,
            max_iterations: 10_000,
        }
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Samples for a weighted logistic fit: rows of features with labels.
pub(crate) struct Problem<'a> {
    pub features: &'a [Vec<f64>],
    pub labels: &'a [bool],
    pub lambda: f64,
}

impl Problem<'_> {
    fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    fn logit(&self, theta: &[f64], j: usize) -> f64 {
        self.features[j].iter().zip(theta).map(|(x, t)| x * t).sum()
    }

    fn weights(&self, a: bool) -> (f64, f64) {
        if a {
            (1.0 - self.lambda, 0.0)
        } else {
            (0.0, self.lambda)
        }
    }

    pub fn loss(&self, theta: &[f64]) -> f64 {
        let n = self.labels.len() as f64;
        let mut s = 0.0;
        for (j, &a) in self.labels.iter().enumerate() {
            let z = self.logit(theta, j);
            let (wp, wn) = self.weights(a);
            s += wp * softplus(-z) + wn * softplus(z);
        }
        s / n
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let n = self.labels.len() as f64;
        let mut g = vec![0.0; self.dim()];
        for (j, &a) in self.labels.iter().enumerate() {
            let z = self.logit(theta, j);
            let (wp, wn) = self.weights(a);
            let dz = -wp * sigmoid(-z) + wn * sigmoid(z);
            for (gi, x) in g.iter_mut().zip(&self.features[j]) {
                *gi += dz * x;
            }
        }
        g.iter_mut().for_each(|gi| *gi /= n);
        g
    }

    fn hessian(&self, theta: &[f64]) -> Vec<Vec<f64>> {
        let p = self.dim();
        let n = self.labels.len() as f64;
        let mut h = vec![vec![0.0; p]; p];
        for (j, &a) in self.labels.iter().enumerate() {
            let z = self.logit(theta, j);
            let (wp, wn) = self.weights(a);
            let w = (wp + wn) * sigmoid(z) * sigmoid(-z);
            let x = &self.features[j];
            for r in 0..p {
                for c in 0..p {
                    h[r][c] += w * x[r] * x[c];
                }
            }
        }
        for row in &mut h {
            row.iter_mut().for_each(|v| *v /= n);
        }
        h
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Gaussian elimination with partial pivoting. None when singular.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn newton_direction(h: &[Vec<f64>], g: &[f64]) -> Vec<f64> {
    let scale = h.iter().enumerate().fold(0.0f64, |m, (i, r)| m.max(r[i].abs())).max(1e-12);
    let mut damping = 0.0;
    loop {
        let mut hd = h.to_vec();
        for (i, row) in hd.iter_mut().enumerate() {
            row[i] += damping;
        }
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        if let Some(d) = solve(hd, neg_g) {
            let descent: f64 = d.iter().zip(g).map(|(a, b)| a * b).sum();
            if descent < 0.0 {
                return d;
            }
        }
        damping = if damping == 0.0 { 1e-10 * scale } else { damping * 10.0 };
        if damping > 1e10 * scale {
            return g.iter().map(|v| -v).collect();
        }
    }
}

pub(crate) fn minimize(problem: &Problem<'_>, init: Vec<f64>, opt: &OptimizerSettings) -> Result<Vec<f64>> {
    let mut theta = init;
    let mut f = problem.loss(&theta);
    let mut g = problem.gradient(&theta);
    let mut step_hint = 1.0;
    for _ in 0..opt.max_iterations {
        if inf_norm(&g) < opt.tolerance {
            return Ok(theta);
        }
        let dir = match opt.method {
            Method::Newton => newton_direction(&problem.hessian(&theta), &g),
            Method::GradientDescent => g.iter().map(|v| -v).collect(),
        };
        let slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
        if opt.method == Method::Newton && -slope / 2.0 < opt.decrement_tolerance * f.abs().max(1.0) {
            return Ok(theta);
        }
        let mut t = match opt.method {
            Method::Newton => 1.0,
            Method::GradientDescent => (step_hint * 2.0_f64).min(1e6),
        };
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(&dir).map(|(x, d)| x + t * d).collect();
            let fc = problem.loss(&cand);
            if fc <= f + 1e-4 * t * slope {
                theta = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        step_hint = t;
        g = problem.gradient(&theta);
        if !accepted {
            // no representable decrease along the direction
            break;
        }
    }
    let norm = inf_norm(&g);
    if norm < opt.tolerance {
        return Ok(theta);
    }
    Err(Error::Convergence {
        iterations: opt.max_iterations,
        gradient_norm: norm,
    })
}
