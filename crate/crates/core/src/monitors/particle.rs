//! Bootstrap particle filter over the current state, with systematic
//! resampling when the effective sample size falls below a threshold.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::weights::LogWeights;
use crate::data::{Confidence, RngSeed};
use crate::error::{Error, Result};

pub trait StochasticModel {
    type State: Clone;

    /// Advances one step under `action`, including process noise.
    fn propagate<R: Rng>(&self, state: &mut Self::State, action: f64, rng: &mut R);

    fn log_likelihood(&self, state: &Self::State, observation: &[f64]) -> f64;
}

#[derive(Debug, Clone)]
pub struct ParticleFilter<M: StochasticModel> {
    model: M,
    particles: Vec<M::State>,
    weights: LogWeights,
    /// Resample when ESS < threshold · M.
    pub threshold: f64,
    rng: ChaCha8Rng,
    pub degenerate_resets: usize,
    pub resamples: usize,
}

impl<M: StochasticModel> ParticleFilter<M> {
    pub fn new(model: M, particles: Vec<M::State>, threshold: f64, seed: RngSeed) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::InvalidArgument("particle filter needs at least one particle".into()));
        }
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::InvalidArgument(format!("resampling threshold {threshold} not in [0, 1]")));
        }
        Ok(ParticleFilter {
            model,
            weights: LogWeights::uniform(particles.len()),
            particles,
            threshold,
            rng: seed.rng(),
            degenerate_resets: 0,
            resamples: 0,
        })
    }

    pub fn particles(&self) -> &[M::State] {
        &self.particles
    }

    pub fn weights(&self) -> Vec<f64> {
        self.weights.normalized()
    }

    pub fn effective_sample_size(&self) -> f64 {
        self.weights.effective_sample_size()
    }

    /// Reweights the current particles by an observation without moving
    /// them (used for the first observation).
    pub fn observe(&mut self, observation: &[f64]) {
        for (i, p) in self.particles.iter().enumerate() {
            let ll = self.model.log_likelihood(p, observation);
            self.weights.add(i, if ll.is_nan() { f64::NEG_INFINITY } else { ll });
        }
        if !self.weights.normalize() {
            self.weights = LogWeights::uniform(self.particles.len());
            self.degenerate_resets += 1;
        }
        let m = self.particles.len() as f64;
        if self.effective_sample_size() < self.threshold * m {
            self.resample();
        }
    }

    /// Propagates every particle under `action`, then reweights by
    /// `observation`.
    pub fn step(&mut self, action: f64, observation: &[f64]) {
        for p in &mut self.particles {
            self.model.propagate(p, action, &mut self.rng);
        }
        self.observe(observation);
    }

    /// Systematic resampling; afterwards every weight is `1/M`.
    pub fn resample(&mut self) {
        let w = self.weights.normalized();
        let m = w.len();
        let u0: f64 = self.rng.random::<f64>() / m as f64;
        let mut out = Vec::with_capacity(m);
        let mut cum = w[0];
        let mut i = 0;
        for k in 0..m {
            let target = u0 + k as f64 / m as f64;
            while cum < target && i + 1 < m {
                i += 1;
                cum += w[i];
            }
            out.push(self.particles[i].clone());
        }
        self.particles = out;
        self.weights = LogWeights::uniform(m);
        self.resamples += 1;
    }

    pub fn confidence(&self, pred: impl Fn(&M::State) -> bool) -> Confidence {
        let w = self.weights.normalized();
        Confidence::clamped(
            self.particles
                .iter()
                .zip(&w)
                .filter(|(p, _)| pred(p))
                .map(|(_, w)| w)
                .sum(),
        )
    }
}
