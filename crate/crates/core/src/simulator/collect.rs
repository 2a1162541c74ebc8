//! Episode simulation and dataset collection with both monitors attached.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::controller::{Controller, ControllerSpec};
use super::models::{McFamily, McSampleModel, Prediction};
use super::region::{AssumptionRegion, RegionConfig};
use super::trace::{StepRecord, TraceHeader, TraceRecord};
use super::{
    mc_measure, mc_safety, mc_step, McParams, McState, C_RANGE, D_RANGE, GOAL, HORIZON, NOMINAL_STEEPNESS, P0_RANGE,
    PROCESS_NOISE, STEEP,
};
use crate::data::{Confidence, Dataset, MonitorSample, RngSeed};
use crate::error::{Error, Result};
use crate::monitors::{draw_uniform, InvalidationConfig, InvalidationMonitor, MonteCarloMonitor};

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    /// States `0..=T`; the last one is the goal state or the state at the
    /// horizon.
    pub states: Vec<McState>,
    /// Observation `t` was taken in state `t`; action `t` followed it.
    pub observations: Vec<[f64; 2]>,
    pub actions: Vec<f64>,
    pub clipped: usize,
    pub safe: bool,
}

/// Runs one episode until the goal is reached or the horizon passes.
pub fn run_episode(
    controller: &mut dyn Controller,
    p0: f64,
    params: McParams,
    mut noise: impl FnMut() -> (f64, f64),
) -> Episode {
    controller.reset();
    let mut s = McState::initial(p0);
    let mut ep = Episode {
        states: vec![s],
        observations: Vec::new(),
        actions: Vec::new(),
        clipped: 0,
        safe: false,
    };
    while s.t < HORIZON && s.p < GOAL {
        let obs = mc_measure(&s, params.c, params.d);
        let u = controller.act(&obs);
        let (next, clipped) = mc_step(s, u, params.z, noise());
        ep.clipped += usize::from(clipped);
        ep.observations.push(obs);
        ep.actions.push(u);
        ep.states.push(next);
        s = next;
    }
    ep.safe = matches!(mc_safety(&ep.states), Ok(true));
    ep
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloSettings {
    pub samples: usize,
    /// Gaussian kernel width per observation channel.
    pub kernel_sigma: Vec<f64>,
    pub prediction: Prediction,
}

impl Default for MonteCarloSettings {
    fn default() -> Self {
        MonteCarloSettings {
            samples: 1000,
            kernel_sigma: vec![0.002, 0.0002],
            prediction: Prediction::Reanchored,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub episodes: usize,
    pub seed: u64,
    pub controller: ControllerSpec,
    /// Steepness values sampled uniformly per episode.
    pub steepness: Vec<f64>,
    /// Steepness the second assumption expects.
    pub nominal_steepness: f64,
    pub p0_range: (f64, f64),
    pub c_range: (f64, f64),
    pub d_range: (f64, f64),
    /// Process-noise standard deviations for position and velocity.
    pub process_noise: (f64, f64),
    pub region: RegionConfig,
    /// Cache file for the assumption region, relative to the config file.
    pub region_cache: Option<PathBuf>,
    pub monte_carlo: MonteCarloSettings,
    pub invalidation: InvalidationConfig,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            episodes: 500,
            seed: 0,
            controller: ControllerSpec::default(),
            steepness: vec![NOMINAL_STEEPNESS, STEEP],
            nominal_steepness: NOMINAL_STEEPNESS,
            p0_range: P0_RANGE,
            c_range: C_RANGE,
            d_range: D_RANGE,
            process_noise: PROCESS_NOISE,
            region: RegionConfig::default(),
            region_cache: None,
            monte_carlo: MonteCarloSettings::default(),
            invalidation: InvalidationConfig::default(),
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.episodes == 0 {
            return bad("episodes must be at least 1".into());
        }
        if self.steepness.is_empty() || self.steepness.iter().any(|z| !(*z > 0.0)) {
            return bad("steepness list must hold positive values".into());
        }
        if !(self.nominal_steepness > 0.0) {
            return bad("nominal steepness must be positive".into());
        }
        for (name, (lo, hi)) in [("p0", self.p0_range), ("c", self.c_range), ("d", self.d_range)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("invalid {name} range [{lo}, {hi}]"));
            }
        }
        if self.c_range.0 * self.d_range.0 >= 1.0
            || self.c_range.0 * self.d_range.1 >= 1.0
            || self.c_range.1 * self.d_range.0 >= 1.0
            || self.c_range.1 * self.d_range.1 >= 1.0
        {
            return bad("measurement map must stay invertible (c·d < 1)".into());
        }
        if !(self.process_noise.0 >= 0.0 && self.process_noise.1 >= 0.0) {
            return bad("process noise must be non-negative".into());
        }
        if self.monte_carlo.samples == 0 {
            return bad("monte_carlo.samples must be at least 1".into());
        }
        if self.monte_carlo.kernel_sigma.len() != 2 || self.monte_carlo.kernel_sigma.iter().any(|s| !(*s > 0.0)) {
            return bad("monte_carlo.kernel_sigma needs two positive widths".into());
        }
        if self.invalidation.tolerance.len() != 2 || self.invalidation.state_span.len() != 2 {
            return bad("invalidation tolerance and state_span need two entries".into());
        }
        self.invalidation.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.region.validate()
    }

    /// Loads the cached region or builds it. Relative cache paths resolve
    /// against `base`; without a cache the region is built in memory.
    pub fn assumption_region(&self, base: &Path) -> Result<AssumptionRegion> {
        let controller = self.controller.relative_to(base);
        match &self.region_cache {
            Some(p) => AssumptionRegion::load_or_build(&self.region, &controller, &base.join(p)),
            None => AssumptionRegion::build(&self.region, &controller),
        }
    }
}

fn normal(sd: f64) -> Option<Normal<f64>> {
    (sd > 0.0).then(|| Normal::new(0.0, sd).expect("positive standard deviation"))
}

/// Simulates one episode with its own seed and runs both monitors over it.
pub fn collect_episode(
    trace_id: u64,
    cfg: &SimulationConfig,
    seed: RngSeed,
    region: &AssumptionRegion,
) -> Result<TraceRecord> {
    let ep_seed = seed.substream(trace_id);
    let mut rng = ep_seed.rng();
    let draw = |rng: &mut rand_chacha::ChaCha8Rng, (lo, hi): (f64, f64)| if lo == hi { lo } else { rng.random_range(lo..=hi) };
    let p0 = draw(&mut rng, cfg.p0_range);
    let c = draw(&mut rng, cfg.c_range);
    let d = draw(&mut rng, cfg.d_range);
    let z = cfg.steepness[rng.random_range(0..cfg.steepness.len())];
    monitored_episode(trace_id, cfg, seed, p0, McParams { z, c, d }, &mut rng, region)
}

/// Runs one episode from a given start and parameters, drawing process noise
/// from `rng`, and records both monitors along it.
pub fn monitored_episode<R: Rng>(
    trace_id: u64,
    cfg: &SimulationConfig,
    seed: RngSeed,
    p0: f64,
    params: McParams,
    rng: &mut R,
    region: &AssumptionRegion,
) -> Result<TraceRecord> {
    let ep_seed = seed.substream(trace_id);
    let McParams { z, c, d } = params;
    let (np, nv) = (normal(cfg.process_noise.0), normal(cfg.process_noise.1));
    let mut controller = cfg.controller.build()?;
    let ep = run_episode(controller.as_mut(), p0, params, || {
        (
            np.map_or(0.0, |n| n.sample(rng)),
            nv.map_or(0.0, |n| n.sample(rng)),
        )
    });

    let a1 = region.contains(&[p0, c, d]);
    let a2 = (z - cfg.nominal_steepness).abs() < 1e-12;

    let ranges = [cfg.p0_range, cfg.c_range, cfg.d_range];
    let samples = draw_uniform(&ranges, cfg.monte_carlo.samples, ep_seed.substream(1))?;
    let membership = samples.iter().map(|s| region.contains(s)).collect();
    let model = McSampleModel {
        z: cfg.nominal_steepness,
        prediction: cfg.monte_carlo.prediction,
    };
    let mut m1 = MonteCarloMonitor::with_membership(model, samples, cfg.monte_carlo.kernel_sigma.clone(), membership)?;
    let family = McFamily {
        z: cfg.nominal_steepness,
        c_range: cfg.c_range,
        d_range: cfg.d_range,
    };
    let mut m2 = InvalidationMonitor::new(family, cfg.invalidation.clone())?;

    let mut steps = Vec::with_capacity(ep.observations.len());
    for (t, (obs, &u)) in ep.observations.iter().zip(&ep.actions).enumerate() {
        m1.update(obs)?;
        let c2 = m2.update(obs)?;
        steps.push(StepRecord {
            t: t as u32,
            state: [ep.states[t].p, ep.states[t].v],
            observation: *obs,
            action: u,
            confidences: vec![m1.confidence().get(), c2.get()],
        });
        m1.record_action(u);
        m2.record_action(u);
    }
    let final_state = *ep.states.last().expect("episode has an initial state");
    Ok(TraceRecord {
        header: TraceHeader {
            trace_id,
            seed: seed.seed,
            stream: seed.stream_id,
            p0,
            params,
            process_noise: cfg.process_noise,
            safe: ep.safe,
            assumptions: vec![a1, a2],
            steps: steps.len(),
            final_state,
            clipped_actions: ep.clipped,
            assumption_region: if region.surrogate { "grid-surrogate" } else { "given" }.into(),
        },
        steps,
    })
}

/// Collects `episodes` traces. Episode `i` depends only on `(seed, i)`, so
/// the output is identical with or without parallelism.
pub fn collect_dataset(
    episodes: usize,
    cfg: &SimulationConfig,
    seed: RngSeed,
    region: &AssumptionRegion,
) -> Result<(Dataset, Vec<TraceRecord>)> {
    cfg.validate()?;
    let ids: Vec<u64> = (0..episodes as u64).collect();
    #[cfg(feature = "parallel")]
    let traces: Result<Vec<TraceRecord>> = {
        use rayon::prelude::*;
        ids.par_iter().map(|&i| collect_episode(i, cfg, seed, region)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let traces: Result<Vec<TraceRecord>> = ids.iter().map(|&i| collect_episode(i, cfg, seed, region)).collect();
    let traces = traces?;
    let dataset = dataset_from_traces(&traces)?
        .with_metadata("assumption_region", "grid-surrogate")
        .with_metadata("seed", seed.seed.to_string());
    Ok((dataset, traces))
}

pub fn dataset_from_traces(traces: &[TraceRecord]) -> Result<Dataset> {
    let k = traces.first().map_or(2, |t| t.header.assumptions.len());
    let mut samples = Vec::new();
    for tr in traces {
        for s in &tr.steps {
            samples.push(MonitorSample {
                trace_id: tr.header.trace_id,
                step: s.t,
                monitor_values: s.confidences.iter().map(|&c| Confidence::clamped(c)).collect(),
                assumption_flags: tr.header.assumptions.clone(),
                safety_flag: tr.header.safe,
            });
        }
    }
    Dataset::new(k, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::controller::SwingController;
    use crate::simulator::trace::{read_traces, write_traces};

    fn quick() -> SimulationConfig {
        SimulationConfig {
            episodes: 4,
            region: RegionConfig {
                resolution: [4, 2, 2],
                ..Default::default()
            },
            monte_carlo: MonteCarloSettings {
                samples: 100,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn episode_ends_at_goal_or_horizon() {
        let mut c = SwingController::default();
        let ep = run_episode(&mut c, -0.5, McParams { z: 0.0025, c: 0.0, d: 0.0 }, || (0.0, 0.0));
        assert_eq!(ep.states.len(), ep.observations.len() + 1);
        let last = ep.states.last().unwrap();
        assert!(last.p >= GOAL || last.t == HORIZON);
        assert_eq!(ep.safe, last.p >= GOAL);
        let mut stuck = SwingController::new(-5.0);
        let ep = run_episode(&mut stuck, -0.5, McParams { z: 0.0025, c: 0.0, d: 0.0 }, || (0.0, 0.0));
        assert!(!ep.safe);
        assert_eq!(ep.observations.len(), HORIZON as usize);
    }

    #[test]
    fn collection_is_deterministic() {
        let cfg = quick();
        let region = cfg.assumption_region(Path::new(".")).unwrap();
        let (d1, t1) = collect_dataset(3, &cfg, RngSeed::new(11), &region).unwrap();
        let (d2, t2) = collect_dataset(3, &cfg, RngSeed::new(11), &region).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(d1, d2);
        let (_, t3) = collect_dataset(3, &cfg, RngSeed::new(12), &region).unwrap();
        assert_ne!(t1, t3);
    }

    #[test]
    fn traces_round_trip_and_validate() {
        let cfg = quick();
        let region = cfg.assumption_region(Path::new(".")).unwrap();
        let (d, traces) = collect_dataset(3, &cfg, RngSeed::new(5), &region).unwrap();
        assert_eq!(d.len(), traces.iter().map(|t| t.steps.len()).sum::<usize>());
        let mut buf = Vec::new();
        write_traces(&traces, &mut buf).unwrap();
        let back = read_traces(&buf[..]).unwrap();
        assert_eq!(back, traces);
        for t in &traces {
            assert_eq!(t.steps[0].confidences[1], 1.0);
            assert!(t.steps.iter().all(|s| s.confidences.iter().all(|c| (0.0..=1.0).contains(c))));
            assert_eq!(t.header.assumption_region, "grid-surrogate");
        }
        let mut broken = traces[0].clone();
        broken.header.safe = !broken.header.safe;
        assert!(broken.validate().is_err());
    }

    #[test]
    fn noise_free_episodes_in_region_are_safe() {
        let cfg = SimulationConfig {
            steepness: vec![NOMINAL_STEEPNESS],
            process_noise: (0.0, 0.0),
            ..quick()
        };
        let region = cfg.assumption_region(Path::new(".")).unwrap();
        assert!(region.volume_fraction() > 0.0);
        let (_, traces) = collect_dataset(40, &cfg, RngSeed::new(3), &region).unwrap();
        for t in traces.iter().filter(|t| t.header.assumptions == [true, true]) {
            assert!(t.header.safe, "{:?}", t.header);
        }
    }

    #[test]
    fn invalid_configs_are_config_errors() {
        for cfg in [
            SimulationConfig { episodes: 0, ..quick() },
            SimulationConfig { steepness: vec![], ..quick() },
            SimulationConfig { c_range: (1.0, -1.0), ..quick() },
            SimulationConfig { process_noise: (-1.0, 0.0), ..quick() },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
    }
}
