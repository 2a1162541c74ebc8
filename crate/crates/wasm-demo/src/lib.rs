//! Browser bindings. Each entry point returns a JSON string for the page
//! in `www/` to plot.

use std::cell::OnceCell;

use rand::Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use coco::bounds::{
    cce_product_bound, cce_product_pointwise, ece_product_bound, ece_weighted_bound, safety_bound, BoundValue,
    MonitorErrorSpec,
};
use coco::calibration::{platt_fit, CalibrationParams, PlattSettings};
use coco::composition::inverse_variance_weights;
use coco::metrics::{bin_summaries, metric_set, Bin, Binning, MetricSet};
use coco::simulator::{monitored_episode, AssumptionRegion, McParams, SimulationConfig, NOMINAL_STEEPNESS, STEEP};
use coco::RngSeed;

fn to_js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn json<T: Serialize>(v: &T) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(to_js)
}

#[derive(Serialize)]
struct Reliability {
    metrics: MetricSet,
    bins: Vec<Bin>,
}

#[derive(Serialize)]
struct CalibrationView {
    params: CalibrationParams,
    before: Reliability,
    after: Reliability,
}

fn reliability(ms: &[f64], labels: &[bool]) -> coco::Result<Reliability> {
    let b = Binning::default();
    Ok(Reliability {
        metrics: metric_set(ms, labels, &b)?,
        bins: bin_summaries(ms, labels, &b)?.non_empty().cloned().collect(),
    })
}

/// Draws `n` scores uniformly, labels them with probability
/// `sigmoid(slope * logit(m) + offset)`, fits Platt scaling at `lambda` on
/// half of the data and reports reliability on the other half before and
/// after calibration.
#[wasm_bindgen]
pub fn calibration_demo(n: usize, slope: f64, offset: f64, lambda: f64, seed: u32) -> Result<String, JsError> {
    let mut rng = RngSeed::new(seed.into()).rng();
    let n = n.max(20);
    let ms: Vec<f64> = (0..n).map(|_| rng.random_range(0.001..0.999)).collect();
    let labels: Vec<bool> = ms
        .iter()
        .map(|&m| {
            let z = slope * (m / (1.0 - m)).ln() + offset;
            rng.random::<f64>() < 1.0 / (1.0 + (-z).exp())
        })
        .collect();
    let half = n / 2;
    let params = platt_fit(&ms[..half], &labels[..half], lambda, &PlattSettings::default()).map_err(to_js)?;
    let (test_ms, test_labels) = (&ms[half..], &labels[half..]);
    json(&CalibrationView {
        params,
        before: reliability(test_ms, test_labels).map_err(to_js)?,
        after: reliability(&params.apply_all(test_ms), test_labels).map_err(to_js)?,
    })
}

#[derive(Serialize)]
struct BoundsView {
    weights: [f64; 2],
    safety: f64,
    ece_product: BoundValue,
    ece_weighted: BoundValue,
    cce_product: BoundValue,
    /// `(x, lower bound on P(A1 & A2 | M1 M2 = x))`
    pointwise: Vec<[f64; 2]>,
}

/// Closed-form bounds for two monitors with MCE `e1`, `e2` and output
/// variances `var1`, `var2`; the weighted average uses inverse-variance
/// weights.
#[wasm_bindgen]
pub fn bounds_demo(e1: f64, e2: f64, var1: f64, var2: f64) -> Result<String, JsError> {
    let w = inverse_variance_weights(&[var1, var2]).map_err(to_js)?;
    let weights = [w.as_slice()[0], w.as_slice()[1]];
    let s1 = MonitorErrorSpec::new(e1, var1).map_err(to_js)?;
    let s2 = MonitorErrorSpec::new(e2, var2).map_err(to_js)?;
    json(&BoundsView {
        weights,
        safety: safety_bound(e1, e2).map_err(to_js)?,
        ece_product: ece_product_bound(s1, s2),
        ece_weighted: ece_weighted_bound(e1, e2, weights[0], weights[1]).map_err(to_js)?,
        cce_product: cce_product_bound(e1, e2).map_err(to_js)?,
        pointwise: (0..=100)
            .map(|i| {
                let x = i as f64 / 100.0;
                [x, cce_product_pointwise(x, e1, e2)]
            })
            .collect(),
    })
}

#[derive(Serialize)]
struct EpisodeView {
    safe: bool,
    in_region: bool,
    nominal_steepness: bool,
    region_volume_fraction: f64,
    position: Vec<f64>,
    velocity: Vec<f64>,
    action: Vec<f64>,
    m1: Vec<f64>,
    m2: Vec<f64>,
}

thread_local! {
    static REGION: OnceCell<AssumptionRegion> = const { OnceCell::new() };
}

fn with_region<T>(cfg: &SimulationConfig, f: impl FnOnce(&AssumptionRegion) -> T) -> Result<T, JsError> {
    REGION.with(|cell| {
        if cell.get().is_none() {
            let region = AssumptionRegion::build(&cfg.region, &cfg.controller).map_err(to_js)?;
            let _ = cell.set(region);
        }
        Ok(f(cell.get().expect("region was just built")))
    })
}

/// Simulates one mountain-car episode from `p0` with measurement
/// parameters `c`, `d` on the nominal or the steep hill, running the
/// Monte-Carlo monitor (m1) and the invalidation monitor (m2) with
/// `samples` particles.
#[wasm_bindgen]
pub fn mountain_car_demo(p0: f64, c: f64, d: f64, steep: bool, samples: usize, seed: u32) -> Result<String, JsError> {
    let mut cfg = SimulationConfig::default();
    cfg.monte_carlo.samples = samples.clamp(50, 5000);
    let params = McParams {
        z: if steep { STEEP } else { NOMINAL_STEEPNESS },
        c,
        d,
    };
    params.validate().map_err(to_js)?;
    let (lo, hi) = cfg.p0_range;
    if !(lo..=hi).contains(&p0) {
        return Err(JsError::new(&format!("p0 must lie in [{lo}, {hi}]")));
    }
    let seed = RngSeed::new(seed.into());
    let mut rng = seed.substream(u64::MAX).rng();
    let (record, fraction) = with_region(&cfg, |region| {
        (
            monitored_episode(0, &cfg, seed, p0, params, &mut rng, region),
            region.volume_fraction(),
        )
    })?;
    let record = record.map_err(to_js)?;
    let steps = &record.steps;
    json(&EpisodeView {
        safe: record.header.safe,
        in_region: record.header.assumptions[0],
        nominal_steepness: record.header.assumptions[1],
        region_volume_fraction: fraction,
        position: steps.iter().map(|s| s.state[0]).collect(),
        velocity: steps.iter().map(|s| s.state[1]).collect(),
        action: steps.iter().map(|s| s.action).collect(),
        m1: steps.iter().map(|s| s.confidences[0]).collect(),
        m2: steps.iter().map(|s| s.confidences[1]).collect(),
    })
}
