//! Synthetic monitoring spaces with known per-monitor calibration error,
//! used to check the closed-form bounds by sampling.
//!
//! Monitor outputs are `M_i ~ Beta(α_i, β_i)` drawn independently, and each
//! assumption holds with probability `clip(M_i + b_i)`, so the monitor's
//! maximum calibration error is at most `|b_i|`.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use super::{
    cce_product_bound, cce_product_pointwise, ece_product_bound, ece_weighted_bound,
    MonitorErrorSpec, Theorem,
};
use crate::composition::{inverse_variance_weights, CompositionKind};
use crate::data::{mean_variance, RngSeed};
use crate::error::{Error, Result};
use crate::metrics::{bin_summaries, Binning};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceParams {
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub bias: [f64; 2],
}

impl SpaceParams {
    /// Two perfectly calibrated monitors with the given Beta shapes.
    pub fn calibrated(alpha: [f64; 2], beta: [f64; 2]) -> Self {
        SpaceParams {
            alpha,
            beta,
            bias: [0.0, 0.0],
        }
    }

    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let mut shape = || rng.random_range(0.5..5.0);
        let alpha = [shape(), shape()];
        let beta = [shape(), shape()];
        SpaceParams {
            alpha,
            beta,
            bias: [rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15)],
        }
    }

    pub fn declared_errors(&self) -> [f64; 2] {
        [self.bias[0].abs(), self.bias[1].abs()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpace {
    pub params: SpaceParams,
    pub samples: usize,
    pub seed: RngSeed,
}

/// Draws from a [`SyntheticSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub m: [Vec<f64>; 2],
    pub a: [Vec<bool>; 2],
}

impl SyntheticSample {
    pub fn len(&self) -> usize {
        self.m[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.m[0].is_empty()
    }

    pub fn conjunction(&self) -> Vec<bool> {
        self.a[0].iter().zip(&self.a[1]).map(|(x, y)| *x && *y).collect()
    }

    pub fn product(&self) -> Vec<f64> {
        self.m[0].iter().zip(&self.m[1]).map(|(x, y)| x * y).collect()
    }
}

/// Diagnostics gathered while checking a sample against the preconditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreconditionReport {
    /// Empirical MCE of each monitor against its own assumption.
    pub monitor_mce: [f64; 2],
    pub variance: [f64; 2],
    /// Largest `Var(M_i | M_C bin) / Var(M_i)` over well-populated bins.
    pub max_variance_ratio: f64,
    /// Largest `|P(A1 A2 | bin) - P(A1 | bin) P(A2 | bin)|` over
    /// well-populated product bins. Independence given `M_C` is only
    /// approximate for this generator, so this is reported, not enforced.
    pub conditional_dependence: f64,
}

const MIN_BIN: usize = 100;

impl SyntheticSpace {
    pub fn draw(&self) -> Result<SyntheticSample> {
        let p = &self.params;
        let mut rng = self.seed.rng();
        let dists = [
            Beta::new(p.alpha[0], p.beta[0]).map_err(|e| Error::InvalidArgument(e.to_string()))?,
            Beta::new(p.alpha[1], p.beta[1]).map_err(|e| Error::InvalidArgument(e.to_string()))?,
        ];
        let mut m = [Vec::with_capacity(self.samples), Vec::with_capacity(self.samples)];
        let mut a = [Vec::with_capacity(self.samples), Vec::with_capacity(self.samples)];
        for _ in 0..self.samples {
            for i in 0..2 {
                let mi: f64 = dists[i].sample(&mut rng);
                let truth = (mi + p.bias[i]).clamp(0.0, 1.0);
                m[i].push(mi);
                a[i].push(rng.random::<f64>() < truth);
            }
        }
        Ok(SyntheticSample { m, a })
    }

    /// Draws and verifies the declared MCE of each monitor and variance
    /// non-inflation given the product, with 4σ binomial slack.
    pub fn draw_checked(&self) -> Result<(SyntheticSample, PreconditionReport)> {
        let s = self.draw()?;
        let b = Binning::default();
        let declared = self.params.declared_errors();
        let mut monitor_mce = [0.0; 2];
        let mut variance = [0.0; 2];
        for i in 0..2 {
            let summary = bin_summaries(&s.m[i], &s.a[i], &b)?;
            monitor_mce[i] = summary.mce();
            for bin in summary.non_empty() {
                let slack = 4.0 * (0.25 / bin.count as f64).sqrt();
                if bin.gap().unwrap().abs() > declared[i] + slack {
                    return Err(Error::Precondition(format!(
                        "monitor {} exceeds declared MCE {} in bin [{}, {})",
                        i + 1,
                        declared[i],
                        bin.lo,
                        bin.hi
                    )));
                }
            }
            variance[i] = mean_variance(&s.m[i])?.1;
        }

        let mc = s.product();
        let k = b.bin_count();
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (j, &x) in mc.iter().enumerate() {
            members[b.index_of(x)].push(j);
        }
        let mut max_variance_ratio: f64 = 0.0;
        let mut conditional_dependence: f64 = 0.0;
        for idx in members.iter().filter(|v| v.len() >= MIN_BIN) {
            let n = idx.len() as f64;
            for i in 0..2 {
                let vals: Vec<f64> = idx.iter().map(|&j| s.m[i][j]).collect();
                let v = mean_variance(&vals)?.1;
                let ratio = v / variance[i];
                max_variance_ratio = max_variance_ratio.max(ratio);
                if ratio > 1.0 + 4.0 * (2.0 / (n - 1.0)).sqrt() {
                    return Err(Error::Precondition(format!(
                        "Var(M{} | M_C bin) / Var(M{}) = {ratio:.3}",
                        i + 1,
                        i + 1
                    )));
                }
            }
            let rate = |f: &dyn Fn(usize) -> bool| idx.iter().filter(|&&j| f(j)).count() as f64 / n;
            let p1 = rate(&|j| s.a[0][j]);
            let p2 = rate(&|j| s.a[1][j]);
            let p12 = rate(&|j| s.a[0][j] && s.a[1][j]);
            conditional_dependence = conditional_dependence.max((p12 - p1 * p2).abs());
        }
        Ok((
            s,
            PreconditionReport {
                monitor_mce,
                variance,
                max_variance_ratio,
                conditional_dependence,
            },
        ))
    }
}

/// Per-bin check of the pointwise lower bound on `P(A1 ∧ A2 | M_C)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinCheck {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub conf: f64,
    pub occ: f64,
    pub lower_bound: f64,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theorem: Theorem,
    pub composition: CompositionKind,
    pub params: SpaceParams,
    pub samples: usize,
    /// Measured error; for the pointwise check, the largest amount by which
    /// a bin falls below its lower bound.
    pub measured: f64,
    pub bound: f64,
    pub sigma: f64,
    pub pass: bool,
    pub vacuous: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub bins: Vec<BinCheck>,
    pub preconditions: PreconditionReport,
}

fn ece_of(ms: &[f64], labels: &[bool], b: &Binning) -> Result<f64> {
    Ok(bin_summaries(ms, labels, b)?.ece())
}

fn cce_of(ms: &[f64], labels: &[bool], b: &Binning) -> Result<f64> {
    Ok(bin_summaries(ms, labels, b)?.cce())
}

/// Standard deviation of a statistic over bootstrap resamples.
fn bootstrap_sigma(
    ms: &[f64],
    labels: &[bool],
    resamples: usize,
    seed: RngSeed,
    stat: impl Fn(&[f64], &[bool]) -> Result<f64>,
) -> Result<f64> {
    if resamples < 2 {
        return Ok(0.0);
    }
    let mut rng = seed.rng();
    let n = ms.len();
    let mut bm = vec![0.0; n];
    let mut bl = vec![false; n];
    let mut values = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        for j in 0..n {
            let k = rng.random_range(0..n);
            bm[j] = ms[k];
            bl[j] = labels[k];
        }
        values.push(stat(&bm, &bl)?);
    }
    Ok(mean_variance(&values)?.1.sqrt())
}

/// Samples `space` and compares the composed monitor's measured error
/// against the named closed-form bound. Passing means
/// `measured ≤ bound + 3σ` with σ from `resamples` bootstrap draws.
///
/// Supported pairs: product with `ece-product`, `cce-product` and
/// `cce-product-pointwise`; weighted with `ece-weighted`.
pub fn verify_bound_empirically(
    space: &SyntheticSpace,
    composition: CompositionKind,
    theorem: Theorem,
    resamples: usize,
) -> Result<BoundReport> {
    let (s, pre) = space.draw_checked()?;
    let b = Binning::default();
    let target = s.conjunction();
    let [e1, e2] = space.params.declared_errors();
    let boot_seed = space.seed.substream(0xb007);
    let mut report = BoundReport {
        theorem,
        composition,
        params: space.params,
        samples: space.samples,
        measured: 0.0,
        bound: 0.0,
        sigma: 0.0,
        pass: false,
        vacuous: false,
        weights: None,
        bins: Vec::new(),
        preconditions: pre,
    };
    match (composition, theorem) {
        (CompositionKind::Product, Theorem::EceProduct) => {
            let mc = s.product();
            let bound = ece_product_bound(
                MonitorErrorSpec::new(e1, pre.variance[0].min(0.25))?,
                MonitorErrorSpec::new(e2, pre.variance[1].min(0.25))?,
            );
            report.measured = ece_of(&mc, &target, &b)?;
            report.sigma = bootstrap_sigma(&mc, &target, resamples, boot_seed, |m, l| ece_of(m, l, &b))?;
            report.bound = bound.value;
            report.vacuous = bound.vacuous;
        }
        (CompositionKind::Product, Theorem::CceProduct) => {
            let mc = s.product();
            let bound = cce_product_bound(e1, e2)?;
            report.measured = cce_of(&mc, &target, &b)?;
            report.sigma = bootstrap_sigma(&mc, &target, resamples, boot_seed, |m, l| cce_of(m, l, &b))?;
            report.bound = bound.value;
            report.vacuous = bound.vacuous;
        }
        (CompositionKind::Product, Theorem::CceProductPointwise) => {
            // The lower bound is convex in x, so by Jensen the bin average
            // of P(A1 A2 | M_C) is at least the bound at the bin's mean.
            let mc = s.product();
            let summary = bin_summaries(&mc, &target, &b)?;
            let mut worst = f64::NEG_INFINITY;
            let mut worst_slack = 0.0;
            for bin in summary.non_empty() {
                let (conf, occ) = (bin.conf.unwrap(), bin.occ.unwrap());
                let n = bin.count as f64;
                let lower = cce_product_pointwise(conf, e1, e2);
                let slack = 3.0 * (occ.max(lower) * (1.0 - occ.max(lower)) / n).max(1.0 / (n * n)).sqrt();
                let shortfall = lower - occ;
                if shortfall - slack > worst - worst_slack {
                    worst = shortfall;
                    worst_slack = slack;
                }
                report.bins.push(BinCheck {
                    lo: bin.lo,
                    hi: bin.hi,
                    count: bin.count,
                    conf,
                    occ,
                    lower_bound: lower,
                    slack,
                    pass: shortfall <= slack,
                });
            }
            report.measured = worst;
            report.sigma = worst_slack / 3.0;
            report.bound = 0.0;
            report.pass = report.bins.iter().all(|c| c.pass);
            return Ok(report);
        }
        (CompositionKind::Weighted, Theorem::EceWeighted) => {
            let w = inverse_variance_weights(&pre.variance)?;
            let (w1, w2) = (w.as_slice()[0], w.as_slice()[1]);
            let mc: Vec<f64> = s.m[0].iter().zip(&s.m[1]).map(|(x, y)| w1 * x + w2 * y).collect();
            let bound = ece_weighted_bound(e1, e2, w1, w2)?;
            report.measured = ece_of(&mc, &target, &b)?;
            report.sigma = bootstrap_sigma(&mc, &target, resamples, boot_seed, |m, l| ece_of(m, l, &b))?;
            report.bound = bound.value;
            report.vacuous = bound.vacuous;
            report.weights = Some([w1, w2]);
        }
        (c, t) => {
            return Err(Error::InvalidArgument(format!(
                "no empirical check for composition `{c}` with theorem `{t}`"
            )))
        }
    }
    report.pass = report.measured <= report.bound + 3.0 * report.sigma;
    Ok(report)
}

/// Input of `coco bounds verify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_resamples")]
    pub bootstrap: usize,
    /// Additional randomly drawn spaces (rejection-sampled against the
    /// preconditions).
    #[serde(default)]
    pub random_spaces: usize,
    #[serde(default, rename = "space")]
    pub spaces: Vec<SpaceParams>,
    #[serde(default = "default_checks")]
    pub checks: Vec<CheckSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckSpec {
    pub composition: CompositionKind,
    pub theorem: Theorem,
}

fn default_samples() -> usize {
    100_000
}

fn default_resamples() -> usize {
    200
}

fn default_checks() -> Vec<CheckSpec> {
    vec![
        CheckSpec {
            composition: CompositionKind::Product,
            theorem: Theorem::EceProduct,
        },
        CheckSpec {
            composition: CompositionKind::Product,
            theorem: Theorem::CceProductPointwise,
        },
        CheckSpec {
            composition: CompositionKind::Weighted,
            theorem: Theorem::EceWeighted,
        },
    ]
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seed: 0,
            samples: default_samples(),
            bootstrap: default_resamples(),
            random_spaces: 20,
            spaces: Vec::new(),
            checks: default_checks(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub spaces: usize,
    /// Random candidates discarded for violating a precondition.
    pub rejected: usize,
    pub reports: Vec<BoundReport>,
    pub all_pass: bool,
}

/// Random spaces that pass the precondition checks, with their seeds.
pub fn accepted_random_spaces(
    count: usize,
    samples: usize,
    seed: RngSeed,
) -> Result<(Vec<SyntheticSpace>, usize)> {
    let mut rng = seed.substream(0x5ace).rng();
    let mut out = Vec::with_capacity(count);
    let mut rejected = 0;
    let mut attempt = 0u64;
    while out.len() < count {
        if attempt as usize > 50 * count + 100 {
            return Err(Error::Precondition(format!(
                "only {} of {count} random spaces met the preconditions",
                out.len()
            )));
        }
        let space = SyntheticSpace {
            params: SpaceParams::random(&mut rng),
            samples,
            seed: seed.substream(attempt),
        };
        attempt += 1;
        match space.draw_checked() {
            Ok(_) => out.push(space),
            Err(Error::Precondition(_)) => rejected += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((out, rejected))
}

pub fn run_verification(cfg: &VerifyConfig) -> Result<VerifyReport> {
    let seed = RngSeed::new(cfg.seed);
    let mut spaces: Vec<SyntheticSpace> = cfg
        .spaces
        .iter()
        .enumerate()
        .map(|(i, p)| SyntheticSpace {
            params: *p,
            samples: cfg.samples,
            seed: seed.substream(1_000_000 + i as u64),
        })
        .collect();
    let (random, rejected) = accepted_random_spaces(cfg.random_spaces, cfg.samples, seed)?;
    spaces.extend(random);
    let jobs: Vec<(&SyntheticSpace, &CheckSpec)> = spaces
        .iter()
        .flat_map(|s| cfg.checks.iter().map(move |c| (s, c)))
        .collect();
    let run = |(s, c): &(&SyntheticSpace, &CheckSpec)| {
        verify_bound_empirically(s, c.composition, c.theorem, cfg.bootstrap)
    };
    #[cfg(feature = "parallel")]
    let reports: Vec<BoundReport> = {
        use rayon::prelude::*;
        jobs.par_iter().map(run).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let reports: Vec<BoundReport> = jobs.iter().map(run).collect::<Result<_>>()?;
    let all_pass = reports.iter().all(|r| r.pass);
    Ok(VerifyReport {
        spaces: spaces.len(),
        rejected,
        reports,
        all_pass,
    })
}
