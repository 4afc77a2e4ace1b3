//! The run configuration: one TOML file covering every stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baseline::PeakConfig;
use crate::dsp::PreprocessConfig;
use crate::error::{Error, Result};
use crate::geolabel::PlaneSpec;
use crate::io;
use crate::nets::ModelConfig;
use crate::simgen::Scenario;
use crate::train::TrainConfig;
use crate::types::SensorModality;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Default output directory for stages run without `--out`.
    pub work_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            work_dir: PathBuf::from("run"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Sensor modalities fed to the model, one channel each, in order.
    pub inputs: Vec<SensorModality>,
    pub scenario: Scenario,
    pub plane: PlaneSpec,
    pub preprocess: PreprocessConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub baseline: PeakConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            inputs: vec![SensorModality::Strain],
            scenario: Scenario::default(),
            plane: PlaneSpec::default(),
            preprocess: PreprocessConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            baseline: PeakConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.plane.validate()?;
        self.preprocess.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.baseline.validate()?;
        if self.inputs.is_empty() {
            return Err(Error::config("inputs", "need at least one modality"));
        }
        if self.inputs.iter().enumerate().any(|(i, m)| self.inputs[..i].contains(m)) {
            return Err(Error::config("inputs", "modalities must be distinct"));
        }
        if self.model.n_channels != self.inputs.len() {
            return Err(Error::config(
                "model.n_channels",
                format!("is {} but {} input modalities are listed", self.model.n_channels, self.inputs.len()),
            ));
        }
        let bridge_nodes = self.scenario.bridge.nodes.len();
        if self.model.n_nodes() != bridge_nodes {
            return Err(Error::config(
                "model.graph",
                format!("has {} nodes but the bridge has {bridge_nodes} sensors", self.model.n_nodes()),
            ));
        }
        for m in &self.inputs {
            let rendered = match m {
                SensorModality::Acceleration => self.scenario.render.accel_rate.is_some(),
                SensorModality::Strain => self.scenario.render.strain_rate.is_some(),
            };
            if !rendered {
                return Err(Error::config(
                    "scenario.render",
                    format!("input {m:?} is not rendered by the scenario"),
                ));
            }
        }
        Ok(())
    }

    /// Parse TOML, rejecting unknown keys with their full path.
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            Error::config(if key == "." { "<root>".to_owned() } else { key }, e.into_inner().message().trim())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Invalid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&io::read_string(path)?)
    }

    /// Loads `path` when given, otherwise the defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_names_its_path() {
        let err = RunConfig::from_toml("[train]\nbatchsize = 3\n").unwrap_err();
        match err {
            Error::ConfigInvalid { key, .. } => assert_eq!(key, "train.batchsize"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn invariant_violation_names_its_key() {
        let err = RunConfig::from_toml("[train]\nmin_lr = 1.0\n").unwrap_err();
        assert!(matches!(err, Error::ConfigInvalid { ref key, .. } if key == "train.min_lr"));
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = RunConfig::from_toml("seed = 9\n[model]\nvariant = \"fe_mlp\"\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.train, TrainConfig::default());
    }
}
