//! Run-time monitors estimating the probability that an assumption holds
//! given the observations so far.

pub mod invalidation;
pub mod monte_carlo;
pub mod particle;
pub mod predicate;
pub mod weights;

pub use invalidation::{
    invalidation_confidence, InvalidationConfig, InvalidationGrid, InvalidationMonitor, ModelFamily, Window,
};
pub use monte_carlo::{draw_uniform, MonteCarloMonitor, ParamSample, SampleModel};
pub use particle::{ParticleFilter, StochasticModel};
pub use predicate::{AssumptionPredicate, HyperBox};
pub use weights::LogWeights;
