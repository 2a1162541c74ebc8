//! Mountain car with noisy, state-dependent measurements.
//!
//! ```text
//! p' = p + v + η_p
//! v' = v + 0.0015·u − z·cos(3p) + η_v
//! p̂ = p + c·v,   v̂ = v + d·p
//! ```
//!
//! An episode is safe when the car reaches `p ≥ 0.45` within 110 steps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod collect;
pub mod controller;
pub mod models;
pub mod region;
pub mod trace;

pub use collect::{collect_dataset, collect_episode, dataset_from_traces, monitored_episode, run_episode, Episode, MonteCarloSettings, SimulationConfig};
pub use models::{McFamily, McParticleModel, McSampleModel, Prediction};
pub use controller::{Controller, ControllerSpec, MlpController, PumpController, SwingController};
pub use region::{AssumptionRegion, RegionConfig};
pub use trace::{read_traces, write_traces, StepRecord, TraceHeader, TraceRecord};

pub const ACCELERATION: f64 = 0.0015;
pub const GOAL: f64 = 0.45;
pub const HORIZON: u32 = 110;
pub const NOMINAL_STEEPNESS: f64 = 0.0025;
pub const STEEP: f64 = 0.0035;
pub const P0_RANGE: (f64, f64) = (-0.6, -0.4);
pub const C_RANGE: (f64, f64) = (-1.0, 1.0);
pub const D_RANGE: (f64, f64) = (-0.01, 0.02);
pub const PROCESS_NOISE: (f64, f64) = (0.001, 0.0001);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McState {
    pub p: f64,
    pub v: f64,
    pub t: u32,
}

impl McState {
    pub fn initial(p0: f64) -> Self {
        McState { p: p0, v: 0.0, t: 0 }
    }
}

/// Hill steepness and measurement-noise coefficients of one episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McParams {
    pub z: f64,
    pub c: f64,
    pub d: f64,
}

impl McParams {
    pub fn validate(&self) -> Result<()> {
        let within = |v: f64, (lo, hi): (f64, f64)| (lo..=hi).contains(&v);
        if !(self.z > 0.0 && within(self.c, C_RANGE) && within(self.d, D_RANGE)) {
            return Err(Error::InvalidArgument(format!("parameters out of range: {self:?}")));
        }
        Ok(())
    }
}

/// One step of the dynamics. Actions are clipped to `[-1, 1]`; the flag
/// reports whether clipping happened. `noise` is `(η_p, η_v)`.
pub fn mc_step(s: McState, u: f64, z: f64, noise: (f64, f64)) -> (McState, bool) {
    let clipped = u.clamp(-1.0, 1.0);
    let u_eff = if clipped.is_nan() { 0.0 } else { clipped };
    let next = McState {
        p: s.p + s.v + noise.0,
        v: s.v + ACCELERATION * u_eff - z * (3.0 * s.p).cos() + noise.1,
        t: s.t + 1,
    };
    (next, u_eff != u)
}

pub fn mc_measure(s: &McState, c: f64, d: f64) -> [f64; 2] {
    [s.p + c * s.v, s.v + d * s.p]
}

/// Inverse of [`mc_measure`] for `c·d ≠ 1`.
pub fn mc_unmeasure(obs: &[f64], c: f64, d: f64) -> (f64, f64) {
    let det = 1.0 - c * d;
    ((obs[0] - c * obs[1]) / det, (obs[1] - d * obs[0]) / det)
}

/// True iff some state at `t ≤ 110` has `p ≥ 0.45`.
pub fn mc_safety(states: &[McState]) -> Result<bool> {
    if states.iter().any(|s| s.t <= HORIZON && s.p >= GOAL) {
        return Ok(true);
    }
    match states.last() {
        Some(s) if s.t >= HORIZON => Ok(false),
        _ => Err(Error::MalformedTrace(format!(
            "trace ends at step {} without reaching the goal",
            states.last().map_or(0, |s| s.t)
        ))),
    }
}
