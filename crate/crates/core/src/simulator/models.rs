//! Mountain-car instances of the monitor model traits.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{mc_measure, mc_step, mc_unmeasure, McState, C_RANGE, D_RANGE, NOMINAL_STEEPNESS};
use crate::monitors::{ModelFamily, SampleModel, StochasticModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Prediction {
    /// One-step prediction from the state that the sample's own measurement
    /// model assigns to the previous observation.
    #[default]
    Reanchored,
    /// Noise-free simulation from `(p0, 0)` over the whole episode.
    OpenLoop,
}

/// Predicts observations for a parameter sample `(p0, c, d)` under the
/// nominal steepness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSampleModel {
    pub z: f64,
    pub prediction: Prediction,
}

impl Default for McSampleModel {
    fn default() -> Self {
        McSampleModel {
            z: NOMINAL_STEEPNESS,
            prediction: Prediction::default(),
        }
    }
}

impl SampleModel for McSampleModel {
    type State = McState;

    fn init(&self, theta: &[f64]) -> McState {
        McState::initial(theta[0])
    }

    fn predict(&self, theta: &[f64], state: &mut McState, previous: Option<(&[f64], f64)>) -> Vec<f64> {
        let (c, d) = (theta[1], theta[2]);
        if let Some((obs, u)) = previous {
            let from = match self.prediction {
                Prediction::Reanchored => {
                    let (p, v) = mc_unmeasure(obs, c, d);
                    McState { p, v, t: state.t }
                }
                Prediction::OpenLoop => *state,
            };
            *state = mc_step(from, u, self.z, (0.0, 0.0)).0;
        }
        mc_measure(state, c, d).to_vec()
    }
}

/// Noise-free dynamics parameterized by the measurement coefficients
/// `(c, d)` at a fixed steepness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McFamily {
    pub z: f64,
    pub c_range: (f64, f64),
    pub d_range: (f64, f64),
}

impl Default for McFamily {
    fn default() -> Self {
        McFamily {
            z: NOMINAL_STEEPNESS,
            c_range: C_RANGE,
            d_range: D_RANGE,
        }
    }
}

impl ModelFamily for McFamily {
    fn param_ranges(&self) -> Vec<(f64, f64)> {
        vec![self.c_range, self.d_range]
    }

    fn state_from_observation(&self, params: &[f64], observation: &[f64]) -> Vec<f64> {
        let (p, v) = mc_unmeasure(observation, params[0], params[1]);
        vec![p, v]
    }

    fn step(&self, _: &[f64], state: &[f64], action: f64) -> Vec<f64> {
        let s = McState { p: state[0], v: state[1], t: 0 };
        let n = mc_step(s, action, self.z, (0.0, 0.0)).0;
        vec![n.p, n.v]
    }

    fn observe(&self, params: &[f64], state: &[f64]) -> Vec<f64> {
        mc_measure(&McState { p: state[0], v: state[1], t: 0 }, params[0], params[1]).to_vec()
    }
}

/// Particle state for filtering with known `(c, d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McParticleModel {
    pub z: f64,
    pub c: f64,
    pub d: f64,
    pub process_noise: (f64, f64),
    pub observation_sigma: (f64, f64),
}

impl StochasticModel for McParticleModel {
    type State = McState;

    fn propagate<R: Rng>(&self, s: &mut McState, action: f64, rng: &mut R) {
        let draw = |sd: f64, rng: &mut R| if sd > 0.0 { Normal::new(0.0, sd).map_or(0.0, |n| n.sample(rng)) } else { 0.0 };
        let noise = (draw(self.process_noise.0, rng), draw(self.process_noise.1, rng));
        *s = mc_step(*s, action, self.z, noise).0;
    }

    fn log_likelihood(&self, s: &McState, obs: &[f64]) -> f64 {
        let o = mc_measure(s, self.c, self.d);
        let r0 = (obs[0] - o[0]) / self.observation_sigma.0;
        let r1 = (obs[1] - o[1]) / self.observation_sigma.1;
        -0.5 * (r0 * r0 + r1 * r1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RngSeed;
    use crate::monitors::{invalidation_confidence, InvalidationConfig, InvalidationGrid, ParticleFilter, Window};

    #[test]
    fn first_prediction_is_measured_initial_state() {
        let m = McSampleModel::default();
        let theta = [-0.5, 0.3, 0.01];
        let mut s = m.init(&theta);
        assert_eq!(m.predict(&theta, &mut s, None), vec![-0.5, 0.01 * -0.5]);
    }

    #[test]
    fn reanchored_prediction_matches_true_parameters() {
        let m = McSampleModel::default();
        let theta = [-0.45, 0.8, -0.005];
        let truth = McState { p: -0.3, v: 0.02, t: 10 };
        let obs = mc_measure(&truth, theta[1], theta[2]);
        let mut s = m.init(&theta);
        let pred = m.predict(&theta, &mut s, Some((&obs, 1.0)));
        let next = mc_step(truth, 1.0, NOMINAL_STEEPNESS, (0.0, 0.0)).0;
        let expect = mc_measure(&next, theta[1], theta[2]);
        assert!((pred[0] - expect[0]).abs() < 1e-12 && (pred[1] - expect[1]).abs() < 1e-12);
    }

    #[test]
    fn open_loop_ignores_observations() {
        let m = McSampleModel { prediction: Prediction::OpenLoop, ..Default::default() };
        let theta = [-0.5, 0.0, 0.0];
        let mut s = m.init(&theta);
        m.predict(&theta, &mut s, None);
        let pred = m.predict(&theta, &mut s, Some((&[9.0, 9.0], 1.0)));
        assert!((pred[1] - 0.001_323_2).abs() < 1e-7);
    }

    fn noise_free_window(c: f64, d: f64, z: f64, n: usize) -> Window {
        let mut s = McState::initial(-0.9);
        let mut w = Window::default();
        for k in 0..n {
            w.observations.push(mc_measure(&s, c, d).to_vec());
            let u = if k % 2 == 0 { 1.0 } else { -1.0 };
            w.actions.push(u);
            s = mc_step(s, u, z, (0.0, 0.0)).0;
        }
        w.actions.pop();
        w
    }

    #[test]
    fn invalidation_accepts_nominal_and_rejects_steep_dynamics() {
        let fam = McFamily::default();
        let cfg = InvalidationConfig::default();
        let grid = InvalidationGrid::new(&fam, &cfg).unwrap();
        // grid point (c, d) = (0.25, 0.00875) lies on the 9-point grid
        let ok = noise_free_window(0.25, 0.00875, NOMINAL_STEEPNESS, 6);
        assert_eq!(invalidation_confidence(&fam, &grid, &ok, &cfg).unwrap().get(), 1.0);
        let bad = noise_free_window(0.25, 0.00875, 0.0035, 6);
        assert_eq!(invalidation_confidence(&fam, &grid, &bad, &cfg).unwrap().get(), 0.0);
    }

    #[test]
    fn particle_filter_tracks_position() {
        let model = McParticleModel {
            z: NOMINAL_STEEPNESS,
            c: 0.5,
            d: 0.01,
            process_noise: (0.001, 0.0001),
            observation_sigma: (0.002, 0.0002),
        };
        let mut rng = RngSeed::new(4).rng();
        let mut truth = McState::initial(-0.5);
        let particles = (0..400).map(|i| McState::initial(-0.6 + 0.2 * i as f64 / 399.0)).collect();
        let mut pf = ParticleFilter::new(model, particles, 0.5, RngSeed::new(5)).unwrap();
        pf.observe(&mc_measure(&truth, model.c, model.d));
        for _ in 0..40 {
            model.propagate(&mut truth, 1.0, &mut rng);
            pf.step(1.0, &mc_measure(&truth, model.c, model.d));
        }
        let near = pf.confidence(|s| (s.p - truth.p).abs() < 0.01);
        assert!(near.get() > 0.9, "{near}");
    }
}
