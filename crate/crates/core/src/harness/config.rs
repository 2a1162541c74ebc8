use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::composition::{BayesSettings, CompositionKind};
use crate::error::{Error, Result};
use crate::formula::{parse_formula, PropFormula};
use crate::simulator::SimulationConfig;

/// Cross-validation protocol and, for `simulate`, the data generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub repetitions: usize,
    pub bins: usize,
    pub lambdas: Vec<f64>,
    /// Assumption formula over `A1..Ak`.
    pub formula: String,
    pub compositions: Vec<CompositionKind>,
    /// Share of traces used for fitting in each repetition.
    pub calibration_fraction: f64,
    pub bayes: BayesSettings,
    /// Dataset used by `run` when none is given on the command line.
    pub dataset: Option<PathBuf>,
    pub simulation: SimulationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            repetitions: 20,
            bins: 10,
            lambdas: vec![0.5, 0.8],
            formula: "A1 & A2".into(),
            compositions: CompositionKind::ALL.to_vec(),
            calibration_fraction: 0.5,
            bayes: BayesSettings::default(),
            dataset: None,
            simulation: SimulationConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        if self.bins == 0 {
            return bad("bins must be at least 1");
        }
        if self.lambdas.is_empty() || self.lambdas.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return bad("lambdas must be a non-empty list of values in [0, 1]");
        }
        if !(self.calibration_fraction > 0.0 && self.calibration_fraction < 1.0) {
            return bad("calibration_fraction must lie in (0, 1)");
        }
        if self.bayes.bins < 2 {
            return bad("bayes.bins must be at least 2");
        }
        self.parsed_formula()?;
        self.simulation.validate()
    }

    pub fn parsed_formula(&self) -> Result<PropFormula> {
        parse_formula(&self.formula)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_protocol() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c.repetitions, 20);
        assert_eq!(c.bins, 10);
        assert_eq!(c.lambdas, vec![0.5, 0.8]);
        assert_eq!(c.formula, "A1 & A2");
        assert_eq!(c.compositions.len(), 5);
    }

    #[test]
    fn parses_nested_sections() {
        let c = ExperimentConfig::from_toml(
            r#"
            seed = 3
            repetitions = 2
            compositions = ["product", "logreg"]
            [simulation]
            episodes = 10
            controller = { kind = "pump" }
            [simulation.monte_carlo]
            samples = 50
            "#,
        )
        .unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.compositions, vec![CompositionKind::Product, CompositionKind::Logreg]);
        assert_eq!(c.simulation.episodes, 10);
        assert_eq!(c.simulation.monte_carlo.samples, 50);
    }

    #[test]
    fn invalid_configs_are_config_errors() {
        for text in [
            "repetitions = 0",
            "bins = 0",
            "lambdas = [1.5]",
            "formula = \"A1 &\"",
            "compositions = [\"median\"]",
            "unknown_key = 1",
            "[simulation]\nepisodes = 0",
        ] {
            let err = ExperimentConfig::from_toml(text).unwrap_err();
            assert_eq!(err.class(), crate::error::ErrorClass::Config, "{text}: {err}");
        }
    }
}
