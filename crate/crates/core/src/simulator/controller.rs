//! Controllers map an observation `(p̂, v̂)` to an action. Outputs outside
//! `[-1, 1]` are clipped by the dynamics.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub trait Controller {
    fn act(&mut self, observation: &[f64; 2]) -> f64;

    /// Clears per-episode state.
    fn reset(&mut self) {}
}

/// Backs up the left slope until `p̂` drops below `turn`, then drives right
/// for the rest of the episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingController {
    pub turn: f64,
    climbing: bool,
}

impl SwingController {
    pub const DEFAULT_TURN: f64 = -0.97;

    pub fn new(turn: f64) -> Self {
        SwingController { turn, climbing: false }
    }
}

impl Default for SwingController {
    fn default() -> Self {
        Self::new(Self::DEFAULT_TURN)
    }
}

impl Controller for SwingController {
    fn act(&mut self, o: &[f64; 2]) -> f64 {
        if o[0] < self.turn {
            self.climbing = true;
        }
        if self.climbing {
            1.0
        } else {
            -1.0
        }
    }

    fn reset(&mut self) {
        self.climbing = false;
    }
}

/// Pushes in the direction of the measured velocity, and always right once
/// `p̂` exceeds `hill`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpController {
    pub hill: f64,
}

impl Default for PumpController {
    fn default() -> Self {
        PumpController { hill: 0.2 }
    }
}

impl Controller for PumpController {
    fn act(&mut self, o: &[f64; 2]) -> f64 {
        if o[0] > self.hill || o[1] >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    #[default]
    Tanh,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    /// Row-major, one row per output unit.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// Feed-forward network with tanh hidden units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpController {
    pub layers: Vec<Layer>,
    #[serde(default)]
    pub output: OutputActivation,
}

impl MlpController {
    pub fn new(layers: Vec<Layer>, output: OutputActivation) -> Result<Self> {
        let mlp = MlpController { layers, output };
        mlp.check_shapes()?;
        Ok(mlp)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mlp: MlpController = serde_json::from_str(text)?;
        mlp.check_shapes()?;
        Ok(mlp)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn check_shapes(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("controller has no layers".into()));
        }
        let mut width = 2;
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.weights.is_empty() || layer.weights.len() != layer.bias.len() {
                return Err(Error::Shape(format!(
                    "layer {i}: {} weight rows but {} biases",
                    layer.weights.len(),
                    layer.bias.len()
                )));
            }
            if let Some(row) = layer.weights.iter().find(|r| r.len() != width) {
                return Err(Error::Shape(format!(
                    "layer {i}: expected {width} inputs, found a row of {}",
                    row.len()
                )));
            }
            width = layer.bias.len();
        }
        if width != 1 {
            return Err(Error::Shape(format!("controller has {width} outputs, expected 1")));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64; 2]) -> f64 {
        let mut x = input.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer
                .weights
                .iter()
                .zip(&layer.bias)
                .map(|(row, b)| {
                    let s = b + row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>();
                    if i < last || self.output == OutputActivation::Tanh {
                        s.tanh()
                    } else {
                        s
                    }
                })
                .collect();
        }
        x[0].clamp(-1.0, 1.0)
    }
}

impl Controller for MlpController {
    fn act(&mut self, o: &[f64; 2]) -> f64 {
        self.forward(o)
    }
}

/// Controller selection as written in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ControllerSpec {
    Swing {
        #[serde(default = "default_turn")]
        turn: f64,
    },
    Pump {
        #[serde(default = "default_hill")]
        hill: f64,
    },
    Mlp {
        path: PathBuf,
    },
}

fn default_turn() -> f64 {
    SwingController::DEFAULT_TURN
}

fn default_hill() -> f64 {
    0.2
}

impl Default for ControllerSpec {
    fn default() -> Self {
        ControllerSpec::Swing { turn: default_turn() }
    }
}

impl ControllerSpec {
    /// Instantiates a fresh controller. MLP weights are read from disk.
    pub fn build(&self) -> Result<Box<dyn Controller + Send>> {
        Ok(match self {
            ControllerSpec::Swing { turn } => Box::new(SwingController::new(*turn)),
            ControllerSpec::Pump { hill } => Box::new(PumpController { hill: *hill }),
            ControllerSpec::Mlp { path } => Box::new(MlpController::load(path)?),
        })
    }

    /// Resolves a relative MLP path against `base`.
    pub fn relative_to(&self, base: &Path) -> ControllerSpec {
        match self {
            ControllerSpec::Mlp { path } if path.is_relative() => ControllerSpec::Mlp { path: base.join(path) },
            other => other.clone(),
        }
    }

    /// Stable text used as a region cache key.
    pub fn describe(&self) -> String {
        match self {
            ControllerSpec::Swing { turn } => format!("swing(turn={turn})"),
            ControllerSpec::Pump { hill } => format!("pump(hill={hill})"),
            ControllerSpec::Mlp { path } => match std::fs::read(path) {
                Ok(bytes) => format!("mlp({})", fnv1a(&bytes)),
                Err(_) => format!("mlp({})", path.display()),
            },
        }
    }
}

fn fnv1a(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pump_examples() {
        let mut c = PumpController::default();
        assert_eq!(c.act(&[-0.5, 0.01]), 1.0);
        assert_eq!(c.act(&[-0.5, -0.01]), -1.0);
        assert_eq!(c.act(&[0.3, -0.01]), 1.0);
    }

    #[test]
    fn swing_latches_until_reset() {
        let mut c = SwingController::default();
        assert_eq!(c.act(&[-0.5, 0.0]), -1.0);
        assert_eq!(c.act(&[-0.98, 0.0]), 1.0);
        assert_eq!(c.act(&[-0.5, -0.01]), 1.0);
        c.reset();
        assert_eq!(c.act(&[-0.5, 0.0]), -1.0);
    }

    #[test]
    fn zero_mlp_outputs_zero() {
        let mlp = MlpController::from_json(r#"{"layers":[{"weights":[[0,0]],"bias":[0]}]}"#).unwrap();
        assert_eq!(mlp.forward(&[0.3, -0.2]), 0.0);
    }

    #[test]
    fn saturated_mlp_follows_velocity_sign() {
        let mut mlp = MlpController::from_json(r#"{"layers":[{"weights":[[0,100]],"bias":[0]}]}"#).unwrap();
        assert!(mlp.act(&[-0.5, 0.05]) > 0.99);
        assert!(mlp.act(&[-0.5, -0.05]) < -0.99);
    }

    #[test]
    fn hidden_layers_use_tanh() {
        let mlp = MlpController::new(
            vec![
                Layer { weights: vec![vec![1.0, 0.0], vec![0.0, 1.0]], bias: vec![0.0, 0.0] },
                Layer { weights: vec![vec![1.0, 1.0]], bias: vec![0.0] },
            ],
            OutputActivation::Linear,
        )
        .unwrap();
        let expect = 0.3f64.tanh() + (-0.1f64).tanh();
        assert!((mlp.forward(&[0.3, -0.1]) - expect).abs() < 1e-15);
        // linear outputs are still clipped
        let big = MlpController::new(vec![Layer { weights: vec![vec![10.0, 0.0]], bias: vec![0.0] }], OutputActivation::Linear).unwrap();
        assert_eq!(big.forward(&[1.0, 0.0]), 1.0);
    }

    #[test]
    fn malformed_networks_are_rejected() {
        assert!(matches!(MlpController::from_json("{not json"), Err(Error::Json(_))));
        assert!(matches!(
            MlpController::from_json(r#"{"layers":[{"weights":[[0,0,0]],"bias":[0]}]}"#),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            MlpController::from_json(r#"{"layers":[{"weights":[[0,0],[1,1]],"bias":[0,0]}]}"#),
            Err(Error::Shape(_))
        ));
        assert!(matches!(MlpController::from_json(r#"{"layers":[]}"#), Err(Error::Shape(_))));
    }

    #[test]
    fn spec_parses_from_toml() {
        #[derive(Deserialize)]
        struct W {
            controller: ControllerSpec,
        }
        let w: W = toml::from_str("controller = { kind = \"pump\" }").unwrap();
        assert_eq!(w.controller, ControllerSpec::Pump { hill: 0.2 });
        let w: W = toml::from_str("controller = { kind = \"swing\", turn = -0.9 }").unwrap();
        assert_eq!(w.controller, ControllerSpec::Swing { turn: -0.9 });
        assert!(toml::from_str::<W>("controller = { kind = \"magic\" }").is_err());
    }
}
