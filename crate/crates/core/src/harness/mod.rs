//! Repeated cross-validation over a monitor dataset: per-monitor Platt
//! calibration, all compositions, evaluation against assumptions and
//! safety.

pub mod config;
pub mod reference;
pub mod table;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::calibration::{platt_fit, CalibrationParams, PlattSettings};
use crate::composition::{
    bayes_fit, bayes_trace, inverse_variance_weights, logreg_apply, logreg_fit, CompositionKind, PowerProduct,
    Product, WeightedAverage,
};
use crate::data::{mean_variance, split_by_trace, Confidence, Dataset, RngSeed};
use crate::error::{Error, Result};
use crate::formula::{compile, evaluate, parse_formula_for, CompositionExpr, ConjunctionComposer, PropFormula};
use crate::metrics::{bin_summaries, metric_set, BinSummary, Binning, MetricSet};
use crate::optim::OptimizerSettings;

pub use config::ExperimentConfig;
pub use table::{Aggregate, MetricAggregate, ResultRow, ResultTable, SkippedRepetition, Target};

/// Identifies one table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowKey {
    pub lambda: f64,
    pub name: String,
    pub target: Target,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum RowSource {
    Monitor(usize),
    Composition(CompositionKind),
}

/// Row layout: for each λ, every monitor then every composition, each
/// against its assumption target and against safety. Bayes appears only
/// under the first λ since it does not use λ.
fn row_layout(cfg: &ExperimentConfig, monitors: usize) -> Vec<(usize, RowSource)> {
    let mut out = Vec::new();
    for li in 0..cfg.lambdas.len() {
        for i in 0..monitors {
            out.push((li, RowSource::Monitor(i)));
        }
        for &k in &cfg.compositions {
            if k != CompositionKind::Bayes || li == 0 {
                out.push((li, RowSource::Composition(k)));
            }
        }
    }
    out
}

fn source_name(s: RowSource) -> String {
    match s {
        RowSource::Monitor(i) => format!("m{}", i + 1),
        RowSource::Composition(k) => k.label().to_string(),
    }
}

/// Summary statistics of the evaluated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub samples: usize,
    pub traces: usize,
    pub monitors: usize,
    pub formula: String,
    /// Fraction of samples whose trace is safe.
    pub safe_fraction: f64,
    /// Fraction of samples violating the formula.
    pub violation_fraction: f64,
    /// Safe fraction among samples violating the formula.
    pub safe_given_violation: Option<f64>,
}

pub fn summarize(d: &Dataset, formula_text: &str) -> Result<DatasetSummary> {
    let formula = parse_formula_for(formula_text, d.monitor_count())?;
    let n = d.len();
    if n == 0 {
        return Err(Error::Empty("dataset"));
    }
    let psi: Vec<bool> = d.samples().iter().map(|s| formula.eval(&s.assumption_flags)).collect();
    let phi = d.safety_column();
    let violated = psi.iter().filter(|p| !**p).count();
    let safe_violated = psi.iter().zip(&phi).filter(|(p, f)| !**p && **f).count();
    Ok(DatasetSummary {
        samples: n,
        traces: d.trace_ids().len(),
        monitors: d.monitor_count(),
        formula: formula_text.to_string(),
        safe_fraction: phi.iter().filter(|f| **f).count() as f64 / n as f64,
        violation_fraction: violated as f64 / n as f64,
        safe_given_violation: (violated > 0).then(|| safe_violated as f64 / violated as f64),
    })
}

/// Everything produced by one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub table: ResultTable,
    pub summary: DatasetSummary,
    /// Bin summaries per row from the first repetition that was used.
    pub reliability: Vec<(RowKey, BinSummary)>,
    /// Per-λ calibration parameters of each monitor, first used repetition.
    pub calibration: Vec<(f64, Vec<CalibrationParams>)>,
}

struct Columns {
    raw: Vec<Vec<f64>>,
    /// `rows[j]` are the raw monitor values of sample `j`.
    rows: Vec<Vec<f64>>,
    flags: Vec<Vec<bool>>,
    psi: Vec<bool>,
    phi: Vec<bool>,
    /// Sample indices grouped per trace in step order.
    traces: Vec<Vec<usize>>,
}

impl Columns {
    fn new(d: &Dataset, formula: &PropFormula) -> Self {
        let k = d.monitor_count();
        let mut by_trace: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (j, s) in d.samples().iter().enumerate() {
            by_trace.entry(s.trace_id).or_default().push(j);
        }
        let traces = by_trace
            .into_values()
            .map(|mut ix| {
                ix.sort_by_key(|&j| d.samples()[j].step);
                ix
            })
            .collect();
        Columns {
            raw: (0..k).map(|i| d.monitor_column(i)).collect(),
            rows: d.samples().iter().map(|s| s.monitor_values.iter().map(|c| c.get()).collect()).collect(),
            flags: (0..k).map(|i| d.assumption_column(i)).collect(),
            psi: d.samples().iter().map(|s| formula.eval(&s.assumption_flags)).collect(),
            phi: d.safety_column(),
            traces,
        }
    }
}

fn single_class(labels: &[bool]) -> bool {
    labels.iter().all(|&b| b) || labels.iter().all(|&b| !b)
}

struct Repetition {
    metrics: Vec<[MetricSet; 2]>,
    bins: Vec<[BinSummary; 2]>,
    calibration: Vec<(f64, Vec<CalibrationParams>)>,
}

/// Errors that mark a split as unusable rather than the run as failed.
fn is_degenerate(e: &Error) -> bool {
    matches!(e, Error::DegenerateFit(_) | Error::UndefinedAuc | Error::Split(_))
}

fn compose(expr: &CompositionExpr, values: &[Vec<f64>], conj: &dyn ConjunctionComposer) -> Result<Vec<f64>> {
    let n = values[0].len();
    let mut out = Vec::with_capacity(n);
    let mut sample = Vec::with_capacity(values.len());
    for j in 0..n {
        sample.clear();
        sample.extend(values.iter().map(|col| Confidence::clamped(col[j])));
        out.push(evaluate(expr, &sample, conj)?.get());
    }
    Ok(out)
}

fn run_repetition(
    cfg: &ExperimentConfig,
    d: &Dataset,
    formula: &PropFormula,
    expr: &CompositionExpr,
    layout: &[(usize, RowSource)],
    r: usize,
) -> Result<std::result::Result<Repetition, String>> {
    let (cal_d, test_d) = split_by_trace(d, cfg.calibration_fraction, RngSeed::new(cfg.seed).substream(r as u64))?;
    let cal = Columns::new(&cal_d, formula);
    let test = Columns::new(&test_d, formula);
    let k = d.monitor_count();
    for (i, f) in test.flags.iter().enumerate() {
        if single_class(f) {
            return Ok(Err(format!("test half has a single class for A{}", i + 1)));
        }
    }
    if single_class(&test.psi) {
        return Ok(Err("test half has a single class for the formula".into()));
    }
    if single_class(&test.phi) {
        return Ok(Err("test half has a single safety outcome".into()));
    }

    let binning = Binning::uniform(cfg.bins)?;
    let opt = OptimizerSettings::default();
    let platt = PlattSettings::default();
    let mut values: BTreeMap<(usize, String), Vec<f64>> = BTreeMap::new();
    let mut calibration = Vec::new();
    let mut bayes_values: Option<Vec<f64>> = None;

    for (li, &lambda) in cfg.lambdas.iter().enumerate() {
        let mut params = Vec::with_capacity(k);
        let mut cal_values = Vec::with_capacity(k);
        let mut test_values = Vec::with_capacity(k);
        for i in 0..k {
            let p = match platt_fit(&cal.raw[i], &cal.flags[i], lambda, &platt) {
                Ok(p) => p,
                Err(e) if is_degenerate(&e) => return Ok(Err(format!("calibrating m{}: {e}", i + 1))),
                Err(e) => return Err(e),
            };
            cal_values.push(p.apply_all(&cal.raw[i]));
            test_values.push(p.apply_all(&test.raw[i]));
            params.push(p);
        }
        calibration.push((lambda, params));
        for (i, v) in test_values.iter().enumerate() {
            values.insert((li, source_name(RowSource::Monitor(i))), v.clone());
        }
        for &kind in &cfg.compositions {
            let v = match kind {
                CompositionKind::Product => compose(expr, &test_values, &Product)?,
                CompositionKind::Power => compose(expr, &test_values, &PowerProduct)?,
                CompositionKind::Weighted => {
                    let vars = cal_values
                        .iter()
                        .map(|v| mean_variance(v).map(|(_, var)| var))
                        .collect::<Result<Vec<f64>>>()?;
                    let w = inverse_variance_weights(&vars)?;
                    compose(expr, &test_values, &WeightedAverage(w))?
                }
                CompositionKind::Logreg => {
                    let fit = match logreg_fit(&cal.rows, &cal.psi, lambda, &opt) {
                        Ok(p) => p,
                        Err(e) if is_degenerate(&e) => return Ok(Err(format!("fitting logreg: {e}"))),
                        Err(e) => return Err(e),
                    };
                    test.rows
                        .iter()
                        .map(|row| logreg_apply(&fit, row).map(Confidence::get))
                        .collect::<Result<Vec<f64>>>()?
                }
                CompositionKind::Bayes => {
                    if bayes_values.is_none() {
                        let hist = bayes_fit(&cal.rows, &cal.psi, &cfg.bayes)?;
                        let prior = Confidence::clamped(cfg.bayes.prior);
                        let mut out = vec![0.0; test.psi.len()];
                        for ix in &test.traces {
                            let steps: Vec<Vec<f64>> = ix.iter().map(|&j| test.rows[j].clone()).collect();
                            for (&j, v) in ix.iter().zip(bayes_trace(&hist, prior, &steps)?) {
                                out[j] = v;
                            }
                        }
                        bayes_values = Some(out);
                    }
                    bayes_values.clone().expect("just computed")
                }
            };
            values.insert((li, kind.label().to_string()), v);
        }
    }

    let mut metrics = Vec::with_capacity(layout.len());
    let mut bins = Vec::with_capacity(layout.len());
    for &(li, src) in layout {
        let v = &values[&(li, source_name(src))];
        let assumption = match src {
            RowSource::Monitor(i) => &test.flags[i],
            RowSource::Composition(_) => &test.psi,
        };
        let mut pair = Vec::with_capacity(2);
        let mut bin_pair = Vec::with_capacity(2);
        for labels in [assumption, &test.phi] {
            match metric_set(v, labels, &binning) {
                Ok(m) => pair.push(m),
                Err(e) if is_degenerate(&e) => return Ok(Err(e.to_string())),
                Err(e) => return Err(e),
            }
            bin_pair.push(bin_summaries(v, labels, &binning)?);
        }
        metrics.push([pair[0], pair[1]]);
        let [a, b]: [BinSummary; 2] = bin_pair.try_into().expect("two targets");
        bins.push([a, b]);
    }
    Ok(Ok(Repetition {
        metrics,
        bins,
        calibration,
    }))
}

/// Runs the repeated split/calibrate/compose/evaluate protocol.
pub fn run_experiment(cfg: &ExperimentConfig, d: &Dataset) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let k = d.monitor_count();
    let formula = parse_formula_for(&cfg.formula, k)?;
    let expr = compile(&formula)?;
    let summary = summarize(d, &cfg.formula)?;
    if summary.traces < 2 {
        return Err(Error::Split(format!("need at least 2 traces, found {}", summary.traces)));
    }
    let phi = d.safety_column();
    if single_class(&phi) {
        return Err(Error::Statistics("dataset holds a single safety outcome".into()));
    }
    let layout = row_layout(cfg, k);

    let reps: Vec<usize> = (0..cfg.repetitions).collect();
    #[cfg(feature = "parallel")]
    let outcomes: Vec<Result<std::result::Result<Repetition, String>>> = {
        use rayon::prelude::*;
        reps.par_iter()
            .map(|&r| run_repetition(cfg, d, &formula, &expr, &layout, r))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Result<std::result::Result<Repetition, String>>> = reps
        .iter()
        .map(|&r| run_repetition(cfg, d, &formula, &expr, &layout, r))
        .collect();

    let mut used = Vec::new();
    let mut skipped = Vec::new();
    for (index, o) in outcomes.into_iter().enumerate() {
        match o? {
            Ok(rep) => used.push(rep),
            Err(reason) => skipped.push(SkippedRepetition { index, reason }),
        }
    }
    if used.is_empty() {
        return Err(Error::Statistics(format!(
            "all {} repetitions were degenerate (first: {})",
            cfg.repetitions,
            skipped.first().map_or("", |s| s.reason.as_str())
        )));
    }

    let mut rows = Vec::with_capacity(2 * layout.len());
    let mut reliability = Vec::with_capacity(2 * layout.len());
    for (pos, &(li, src)) in layout.iter().enumerate() {
        for (t, target) in [Target::Assumption, Target::Safety].into_iter().enumerate() {
            let sets: Vec<MetricSet> = used.iter().map(|rep| rep.metrics[pos][t]).collect();
            let key = RowKey {
                lambda: cfg.lambdas[li],
                name: source_name(src),
                target,
            };
            reliability.push((key.clone(), used[0].bins[pos][t].clone()));
            rows.push(ResultRow {
                lambda: key.lambda,
                name: key.name,
                target,
                metrics: MetricAggregate::of(&sets),
            });
        }
    }
    Ok(ExperimentOutput {
        table: ResultTable {
            rows,
            repetitions: cfg.repetitions,
            used: used.len(),
            skipped,
        },
        summary,
        reliability,
        calibration: used[0].calibration.clone(),
    })
}
