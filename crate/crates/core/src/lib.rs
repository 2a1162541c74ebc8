//! Confidence composition for runtime monitors of verification assumptions.

pub mod calibration;
pub mod composition;
pub mod data;
pub mod error;
pub mod formula;
pub mod harness;
pub mod metrics;
pub mod monitors;
pub mod optim;
pub mod simulator;
pub mod bounds;

pub use data::{Confidence, Dataset, MonitorSample, RngSeed};
pub use error::{Error, Result};
