//! The JSON experiment configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tue_core::data::SyntheticConfig;
use tue_core::eval::{TrainConfig, TransferPlan};
use tue_core::generators::{GenConfig, ModelDims};

use crate::CliError;

/// Options for the evaluation subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    /// Test samples per class written by `gen-data --test-out`; defaults to
    /// the training count.
    pub test_per_class: Option<usize>,
    /// Fraction of each class used to fit the separability probe.
    pub probe_train_fraction: f64,
    /// Target-to-source class map for `transfer`.
    pub class_map: Option<Vec<usize>>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            test_per_class: None,
            probe_train_fraction: 0.5,
            class_map: None,
        }
    }
}

/// Default output locations; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputOptions {
    pub dir: Option<PathBuf>,
    /// Write a `<output>.provenance.json` record next to every output.
    pub provenance: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    pub data: SyntheticConfig,
    pub model: ModelDims,
    pub generate: GenConfig,
    pub train: TrainConfig,
    pub eval: EvalOptions,
    pub output: OutputOptions,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            data: SyntheticConfig::default(),
            model: ModelDims::default(),
            generate: GenConfig::default(),
            train: TrainConfig::default(),
            eval: EvalOptions::default(),
            output: OutputOptions::default(),
        }
    }
}

impl CliConfig {
    /// Parses a JSON document, rejecting unknown keys with their full path.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Schema {
                path: String::new(),
                message: format!("not valid JSON: {e}"),
            })?;
        for section in ["generate", "train"] {
            if value.get(section).and_then(|s| s.get("model")).is_some() {
                return Err(CliError::Schema {
                    path: format!("{section}.model"),
                    message: "model widths belong in the top-level `model` section".into(),
                });
            }
        }
        let mut cfg: CliConfig =
            serde_path_to_error::deserialize(value).map_err(|e| CliError::Schema {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        cfg.generate.model = cfg.model;
        cfg.train.model = cfg.model;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let wrap = |section: &str, r: tue_core::Result<()>| {
            r.map_err(|e| CliError::Schema {
                path: section.to_string(),
                message: e.to_string(),
            })
        };
        wrap("data", self.data.validate())?;
        wrap("model", self.model.validate())?;
        wrap("generate", self.generate.validate())?;
        wrap("train", self.train.validate())?;
        let f = self.eval.probe_train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(CliError::Schema {
                path: "eval.probe_train_fraction".into(),
                message: format!("must lie in (0, 1), got {f}"),
            });
        }
        Ok(())
    }

    pub fn transfer_plan(&self, interpolate: bool) -> TransferPlan {
        TransferPlan {
            class_map: self.eval.class_map.clone(),
            interpolate,
        }
    }

    pub fn test_per_class(&self) -> usize {
        self.eval.test_per_class.unwrap_or(self.data.per_class)
    }

    pub fn provenance_enabled(&self) -> bool {
        self.output.provenance.unwrap_or(true)
    }

    /// Resolves a relative output path against `output.dir`.
    pub fn output_path(&self, path: &Path) -> PathBuf {
        match &self.output.dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }
}
