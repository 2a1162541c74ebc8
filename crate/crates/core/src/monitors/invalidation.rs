//! Window-based model invalidation: searches a grid over model parameters
//! and window-initial states for a noise-free simulation that reproduces
//! the recent observations within tolerance.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::data::Confidence;
use crate::error::{Error, Result};

/// A parametric family of deterministic models with an invertible
/// measurement map.
pub trait ModelFamily {
    fn param_ranges(&self) -> Vec<(f64, f64)>;

    /// State reproducing `observation` exactly under `params`.
    fn state_from_observation(&self, params: &[f64], observation: &[f64]) -> Vec<f64>;

    fn step(&self, params: &[f64], state: &[f64], action: f64) -> Vec<f64>;

    fn observe(&self, params: &[f64], state: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvalidationConfig {
    /// Maximum window length `L`.
    pub window: usize,
    /// Per-channel residual tolerance (infinity norm per channel).
    pub tolerance: Vec<f64>,
    /// Grid points per parameter dimension.
    pub param_resolution: usize,
    /// Grid points per state dimension for the window-initial offset.
    pub state_resolution: usize,
    /// Half-width of the initial-state offset grid per state dimension.
    pub state_span: Vec<f64>,
    /// Maximum grid points to test; `None` explores the whole grid.
    pub budget: Option<usize>,
}

impl Default for InvalidationConfig {
    fn default() -> Self {
        InvalidationConfig {
            window: 6,
            tolerance: vec![0.01, 0.001],
            param_resolution: 9,
            state_resolution: 3,
            state_span: vec![0.004, 0.0004],
            budget: None,
        }
    }
}

impl InvalidationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::InvalidArgument("window length must be at least 2".into()));
        }
        if self.tolerance.is_empty() || self.tolerance.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if self.param_resolution == 0 || self.state_resolution == 0 {
            return Err(Error::InvalidArgument("grid resolution must be at least 1".into()));
        }
        if self.state_span.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidArgument("state spans must be non-negative".into()));
        }
        if self.budget == Some(0) {
            return Err(Error::InvalidArgument("exploration budget must be positive".into()));
        }
        Ok(())
    }
}

/// Observations and the actions applied between them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Window {
    pub observations: Vec<Vec<f64>>,
    /// `actions[t]` is applied between observation `t` and `t + 1`.
    pub actions: Vec<f64>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![(lo + hi) / 2.0];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Indices `0..n` in bit-reversed order of a covering power of two, so any
/// prefix spreads over the whole range.
fn bit_reversal_order(n: usize) -> Vec<usize> {
    if n <= 1 {
        return (0..n).collect();
    }
    let bits = usize::BITS - (n - 1).leading_zeros();
    (0..1usize << bits)
        .map(|k| k.reverse_bits() >> (usize::BITS - bits))
        .filter(|&k| k < n)
        .collect()
}

/// Precomputed search grid for one family and configuration.
#[derive(Debug, Clone)]
pub struct InvalidationGrid {
    params: Vec<Vec<f64>>,
    offsets: Vec<Vec<f64>>,
    order: Vec<usize>,
}

impl InvalidationGrid {
    pub fn new<F: ModelFamily>(family: &F, cfg: &InvalidationConfig) -> Result<Self> {
        cfg.validate()?;
        let axes: Vec<Vec<f64>> = family
            .param_ranges()
            .iter()
            .map(|&(lo, hi)| linspace(lo, hi, cfg.param_resolution))
            .collect();
        let offset_axes: Vec<Vec<f64>> = cfg
            .state_span
            .iter()
            .map(|&s| linspace(-s, s, cfg.state_resolution))
            .collect();
        let params = cartesian(&axes);
        let offsets = cartesian(&offset_axes);
        let order = bit_reversal_order(params.len() * offsets.len());
        Ok(InvalidationGrid {
            params,
            offsets,
            order,
        })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    fn point(&self, k: usize) -> (&[f64], &[f64]) {
        let n_off = self.offsets.len();
        (&self.params[k / n_off], &self.offsets[k % n_off])
    }
}

fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &v in axis {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

fn consistent<F: ModelFamily>(
    family: &F,
    params: &[f64],
    offset: &[f64],
    window: &Window,
    tolerance: &[f64],
) -> bool {
    let mut state = family.state_from_observation(params, &window.observations[0]);
    for (s, o) in state.iter_mut().zip(offset) {
        *s += o;
    }
    for (t, obs) in window.observations.iter().enumerate() {
        if t > 0 {
            state = family.step(params, &state, window.actions[t - 1]);
        }
        let pred = family.observe(params, &state);
        let within = obs
            .iter()
            .zip(&pred)
            .zip(tolerance)
            .all(|((y, p), e)| (y - p).abs() <= *e);
        if !within {
            return false;
        }
    }
    true
}

/// 1 if some grid point explains the window within the budget, otherwise
/// `1 - explored / grid size`.
pub fn invalidation_confidence<F: ModelFamily>(
    family: &F,
    grid: &InvalidationGrid,
    window: &Window,
    cfg: &InvalidationConfig,
) -> Result<Confidence> {
    cfg.validate()?;
    if window.observations.is_empty() || window.actions.len() + 1 != window.observations.len() {
        return Err(Error::Shape(format!(
            "window with {} observations and {} actions",
            window.observations.len(),
            window.actions.len()
        )));
    }
    if window.observations.len() > cfg.window {
        return Err(Error::Shape(format!(
            "window of {} observations exceeds length {}",
            window.observations.len(),
            cfg.window
        )));
    }
    if window.observations.iter().any(|o| o.len() != cfg.tolerance.len()) {
        return Err(Error::Shape("observation size differs from tolerance size".into()));
    }
    let total = grid.len();
    let budget = cfg.budget.unwrap_or(total).min(total);
    for &k in &grid.order[..budget] {
        let (params, offset) = grid.point(k);
        if consistent(family, params, offset, window, &cfg.tolerance) {
            return Ok(Confidence::ONE);
        }
    }
    Ok(Confidence::clamped(1.0 - budget as f64 / total as f64))
}

/// Runs the invalidation test over a sliding window of the most recent
/// observations.
#[derive(Debug, Clone)]
pub struct InvalidationMonitor<F: ModelFamily> {
    family: F,
    cfg: InvalidationConfig,
    grid: InvalidationGrid,
    observations: VecDeque<Vec<f64>>,
    actions: VecDeque<f64>,
    pending_action: Option<f64>,
}

impl<F: ModelFamily> InvalidationMonitor<F> {
    pub fn new(family: F, cfg: InvalidationConfig) -> Result<Self> {
        let grid = InvalidationGrid::new(&family, &cfg)?;
        Ok(InvalidationMonitor {
            family,
            cfg,
            grid,
            observations: VecDeque::new(),
            actions: VecDeque::new(),
            pending_action: None,
        })
    }

    pub fn record_action(&mut self, u: f64) {
        self.pending_action = Some(u);
    }

    /// Adds an observation and returns the confidence for the current
    /// window. A single observation is always explainable, so the first
    /// step yields 1.
    pub fn update(&mut self, observation: &[f64]) -> Result<Confidence> {
        if !self.observations.is_empty() {
            self.actions.push_back(self.pending_action.take().unwrap_or(0.0));
        }
        self.observations.push_back(observation.to_vec());
        while self.observations.len() > self.cfg.window {
            self.observations.pop_front();
            self.actions.pop_front();
        }
        if self.observations.len() < 2 {
            return Ok(Confidence::ONE);
        }
        let window = Window {
            observations: self.observations.iter().cloned().collect(),
            actions: self.actions.iter().copied().collect(),
        };
        invalidation_confidence(&self.family, &self.grid, &window, &self.cfg)
    }
}
