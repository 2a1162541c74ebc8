//! Weighted Monte-Carlo sample over initial conditions and model
//! parameters. Each sample carries its own model state; weights are updated
//! with a Gaussian kernel of the observation residual.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::predicate::AssumptionPredicate;
use super::weights::LogWeights;
use crate::data::{Confidence, RngSeed};
use crate::error::{Error, Result};

/// Predicts observations for one parameter sample.
pub trait SampleModel {
    type State: Clone;

    fn init(&self, theta: &[f64]) -> Self::State;

    /// Predicted observation for the current step. `previous` holds the
    /// previous observation and the action applied after it (None at the
    /// first step). Implementations may advance `state`.
    fn predict(&self, theta: &[f64], state: &mut Self::State, previous: Option<(&[f64], f64)>) -> Vec<f64>;
}

pub fn validate_ranges(ranges: &[(f64, f64)]) -> Result<()> {
    if ranges.is_empty() {
        return Err(Error::InvalidArgument("no parameter ranges".into()));
    }
    for (lo, hi) in ranges {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidArgument(format!("invalid range [{lo}, {hi}]")));
        }
    }
    Ok(())
}

/// `count` points drawn uniformly from the box `ranges`.
pub fn draw_uniform(ranges: &[(f64, f64)], count: usize, seed: RngSeed) -> Result<Vec<Vec<f64>>> {
    validate_ranges(ranges)?;
    if count == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let mut rng = seed.rng();
    Ok((0..count)
        .map(|_| {
            ranges
                .iter()
                .map(|&(lo, hi)| if lo == hi { lo } else { rng.random_range(lo..=hi) })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct MonteCarloMonitor<M: SampleModel> {
    model: M,
    samples: Vec<Vec<f64>>,
    states: Vec<M::State>,
    weights: LogWeights,
    kernel_sigma: Vec<f64>,
    satisfies: Vec<bool>,
    previous: Option<Vec<f64>>,
    pending_action: Option<f64>,
    /// Number of times all weights vanished and were reset to uniform.
    pub degenerate_resets: usize,
}

/// Summary of a monitor's sample set, for inspection and serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSample {
    pub values: Vec<f64>,
    pub weight: f64,
}

impl<M: SampleModel> MonteCarloMonitor<M> {
    /// `count` samples drawn uniformly from `ranges` with equal weights.
    pub fn init(
        model: M,
        ranges: &[(f64, f64)],
        count: usize,
        seed: RngSeed,
        kernel_sigma: Vec<f64>,
        predicate: &AssumptionPredicate,
    ) -> Result<Self> {
        let samples = draw_uniform(ranges, count, seed)?;
        Self::from_samples(model, samples, kernel_sigma, predicate)
    }

    pub fn from_samples(
        model: M,
        samples: Vec<Vec<f64>>,
        kernel_sigma: Vec<f64>,
        predicate: &AssumptionPredicate,
    ) -> Result<Self> {
        let satisfies = samples.iter().map(|t| predicate.contains(t)).collect();
        Self::with_membership(model, samples, kernel_sigma, satisfies)
    }

    /// Like [`Self::from_samples`] with predicate membership precomputed per
    /// sample.
    pub fn with_membership(model: M, samples: Vec<Vec<f64>>, kernel_sigma: Vec<f64>, satisfies: Vec<bool>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("sample count must be at least 1".into()));
        }
        if kernel_sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidArgument("kernel widths must be positive".into()));
        }
        if satisfies.len() != samples.len() {
            return Err(Error::LengthMismatch {
                left: samples.len(),
                right: satisfies.len(),
            });
        }
        let states = samples.iter().map(|t| model.init(t)).collect();
        Ok(MonteCarloMonitor {
            model,
            weights: LogWeights::uniform(samples.len()),
            samples,
            states,
            kernel_sigma,
            satisfies,
            previous: None,
            pending_action: None,
            degenerate_resets: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.weights.normalized()
    }

    pub fn samples(&self) -> Vec<ParamSample> {
        self.samples
            .iter()
            .zip(self.weights.normalized())
            .map(|(v, w)| ParamSample {
                values: v.clone(),
                weight: w,
            })
            .collect()
    }

    /// Records the action applied after the most recent observation.
    pub fn record_action(&mut self, u: f64) {
        self.pending_action = Some(u);
    }

    pub fn update(&mut self, observation: &[f64]) -> Result<()> {
        if observation.len() != self.kernel_sigma.len() {
            return Err(Error::Shape(format!(
                "observation has {} channels, kernel has {}",
                observation.len(),
                self.kernel_sigma.len()
            )));
        }
        let previous = self.previous.take();
        let u = self.pending_action.take().unwrap_or(0.0);
        for i in 0..self.samples.len() {
            let pred = self.model.predict(
                &self.samples[i],
                &mut self.states[i],
                previous.as_deref().map(|o| (o, u)),
            );
            let mut ll = 0.0;
            for ((y, yhat), s) in observation.iter().zip(&pred).zip(&self.kernel_sigma) {
                let r = (y - yhat) / s;
                ll -= 0.5 * r * r;
            }
            self.weights.add(i, if ll.is_nan() { f64::NEG_INFINITY } else { ll });
        }
        if !self.weights.normalize() {
            self.weights = LogWeights::uniform(self.samples.len());
            self.degenerate_resets += 1;
        }
        self.previous = Some(observation.to_vec());
        Ok(())
    }

    /// Weight fraction of samples satisfying the predicate given at
    /// construction.
    pub fn confidence(&self) -> Confidence {
        let w = self.weights.normalized();
        Confidence::clamped(
            w.iter()
                .zip(&self.satisfies)
                .filter(|(_, s)| **s)
                .map(|(w, _)| w)
                .sum(),
        )
    }

    /// Weight fraction satisfying an arbitrary predicate.
    pub fn confidence_for(&self, predicate: &AssumptionPredicate) -> Confidence {
        let w = self.weights.normalized();
        Confidence::clamped(
            w.iter()
                .zip(&self.samples)
                .filter(|(_, t)| predicate.contains(t))
                .map(|(w, _)| w)
                .sum(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monitors::predicate::HyperBox;
    use proptest::prelude::*;

    /// Observation equals the first parameter.
    #[derive(Clone)]
    struct Constant;

    impl SampleModel for Constant {
        type State = ();
        fn init(&self, _: &[f64]) {}
        fn predict(&self, theta: &[f64], _: &mut (), _: Option<(&[f64], f64)>) -> Vec<f64> {
            vec![theta[0]]
        }
    }

    fn domain() -> HyperBox {
        HyperBox::new(vec![0.0], vec![10.0]).unwrap()
    }

    fn below(x: f64) -> AssumptionPredicate {
        AssumptionPredicate::new(domain(), vec![HyperBox::new(vec![0.0], vec![x]).unwrap()]).unwrap()
    }

    fn monitor(values: &[f64], pred: &AssumptionPredicate) -> MonteCarloMonitor<Constant> {
        let s = values.iter().map(|&v| vec![v]).collect();
        MonteCarloMonitor::from_samples(Constant, s, vec![0.1], pred).unwrap()
    }

    #[test]
    fn single_sample_has_full_weight() {
        let m = MonteCarloMonitor::init(Constant, &[(0.0, 1.0)], 1, RngSeed::new(0), vec![1.0], &below(10.0)).unwrap();
        assert_eq!(m.weights(), vec![1.0]);
    }

    #[test]
    fn init_is_deterministic_and_in_range() {
        let ranges = [(-0.6, -0.4), (-1.0, 1.0), (-0.01, 0.02)];
        let dom = HyperBox::new(vec![-0.6, -1.0, -0.01], vec![-0.4, 1.0, 0.02]).unwrap();
        let p = AssumptionPredicate::everything(dom.clone());
        let a = MonteCarloMonitor::init(Constant, &ranges, 1000, RngSeed::new(3), vec![1.0], &p).unwrap();
        let b = MonteCarloMonitor::init(Constant, &ranges, 1000, RngSeed::new(3), vec![1.0], &p).unwrap();
        assert_eq!(a.samples(), b.samples());
        assert!(a.samples().iter().all(|s| dom.contains(&s.values)));
        assert!(MonteCarloMonitor::init(Constant, &[(1.0, 0.0)], 5, RngSeed::new(0), vec![1.0], &p).is_err());
        assert!(MonteCarloMonitor::init(Constant, &ranges, 0, RngSeed::new(0), vec![1.0], &p).is_err());
    }

    #[test]
    fn matching_sample_takes_the_weight() {
        let mut m = monitor(&[1.0, 5.0, 9.0], &below(2.0));
        m.update(&[5.0]).unwrap();
        let w = m.weights();
        assert!(w[1] > 1.0 - 1e-12);
        assert_eq!(m.confidence().get(), w[0]);
    }

    #[test]
    fn uninformative_updates_keep_weights() {
        let mut m = monitor(&[3.0, 3.0, 3.0, 3.0], &below(5.0));
        m.update(&[3.4]).unwrap();
        for w in m.weights() {
            assert!((w - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn equal_residuals_keep_weights() {
        let mut m = monitor(&[2.0, 4.0], &below(3.0));
        m.update(&[3.0]).unwrap();
        assert!((m.weights()[0] - 0.5).abs() < 1e-15);
        assert!((m.confidence().get() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn confidence_is_weight_fraction() {
        let m = monitor(&[1.0, 2.0, 8.0], &below(10.0));
        assert_eq!(m.confidence().get(), 1.0);
        let m = monitor(&[1.0, 2.0, 8.0], &AssumptionPredicate::nothing(domain()));
        assert_eq!(m.confidence().get(), 0.0);
        // weights (0.25, 0.25, 0.5): first two satisfy
        let mut m2 = monitor(&[1.0, 1.0, 2.0], &below(1.5));
        m2.weights = LogWeights::from_weights(&[0.25, 0.25, 0.5]);
        assert!((m2.confidence().get() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn total_underflow_resets_to_uniform() {
        let mut m = monitor(&[1.0, 2.0], &below(1.5));
        m.update(&[f64::NAN]).unwrap();
        assert_eq!(m.degenerate_resets, 1);
        assert_eq!(m.weights(), vec![0.5, 0.5]);
        assert!(m.update(&[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn weights_sum_to_one(values in prop::collection::vec(0.0f64..10.0, 1..30), obs in prop::collection::vec(0.0f64..10.0, 1..5)) {
            let mut m = monitor(&values, &below(5.0));
            for o in obs {
                m.update(&[o]).unwrap();
                let s: f64 = m.weights().iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn confidence_ignores_order(values in prop::collection::vec(0.0f64..10.0, 2..30), o in 0.0f64..10.0) {
            let mut a = monitor(&values, &below(5.0));
            let mut rev = values.clone();
            rev.reverse();
            let mut b = monitor(&rev, &below(5.0));
            a.update(&[o]).unwrap();
            b.update(&[o]).unwrap();
            prop_assert!((a.confidence().get() - b.confidence().get()).abs() < 1e-12);
        }
    }
}
