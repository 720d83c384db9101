use serde::{Deserialize, Serialize};
use std::path::Path;

use isac_ident::dataset::ScenarioConfig;
use isac_ident::identify::DnnHyper;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    /// Share of samples, by whole sequences, used for fitting.
    pub split_ratio: f64,
    pub dnn: DnnHyper,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            split_ratio: 0.8,
            dnn: DnnHyper::default(),
        }
    }
}

/// Everything a command reads from the config file, after the seed override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub train: TrainSettings,
}

impl RunConfig {
    /// Parses the TOML text. Top-level keys configure the scenario; an
    /// optional `[train]` table configures splitting and the DNN.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| CliError::usage(format!("config: {e}")))?;
        let train = match table.remove("train") {
            Some(v) => v.try_into().map_err(|e| CliError::usage(format!("config [train]: {e}")))?,
            None => TrainSettings::default(),
        };
        let scenario: ScenarioConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| CliError::usage(format!("config: {e}")))?;
        Ok(Self { scenario, train })
    }

    /// Reads `path` if given, else the defaults, then applies `seed`.
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_toml(&text)?
            }
            None => Self {
                scenario: ScenarioConfig::default(),
                train: TrainSettings::default(),
            },
        };
        if let Some(s) = seed {
            cfg.scenario.seed = s;
        }
        cfg.train.dnn.seed = cfg.scenario.seed;
        cfg.scenario.validate().map_err(CliError::from)?;
        cfg.scenario.detect.validate().map_err(CliError::from)?;
        if !(cfg.train.split_ratio > 0.0 && cfg.train.split_ratio < 1.0) {
            return Err(CliError::usage("train.split_ratio must lie in (0, 1)"));
        }
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        self.scenario.seed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg.scenario, ScenarioConfig::default());
        assert_eq!(cfg.train, TrainSettings::default());
    }

    #[test]
    fn nested_tables_override_fields() {
        let cfg = RunConfig::from_toml(
            "seed = 4\nn_sequences = 3\n[geometry]\nfov_deg = 50.0\n[comm]\nn_beams = 32\n[train]\nsplit_ratio = 0.7\n[train.dnn]\nepochs = 5\n",
        )
        .unwrap();
        assert_eq!(cfg.scenario.seed, 4);
        assert_eq!(cfg.scenario.n_sequences, 3);
        assert_eq!(cfg.scenario.geometry.fov_deg, 50.0);
        assert_eq!(cfg.scenario.comm.n_beams, 32);
        assert_eq!(cfg.train.split_ratio, 0.7);
        assert_eq!(cfg.train.dnn.epochs, 5);
        assert_eq!(cfg.train.dnn.batch_size, 32);
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let err = RunConfig::from_toml("n_sequencez = 3\n").unwrap_err();
        assert_eq!(err.code, 2);
        assert_eq!(RunConfig::from_toml("[train]\nratio = 0.5\n").unwrap_err().code, 2);
    }
}
