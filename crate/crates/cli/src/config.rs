use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use leapgrid_core::datagen::SamplingConfig;
use leapgrid_core::nn::Activation;
use leapgrid_core::{cases, parse_matpower_case, ActionConfig, GridCase, LeapConfig, ModelKind};
use serde::{Deserialize, Serialize};

use crate::{Failure, ResultExt};

/// One experiment, read from a JSON file.
///
/// ```json
/// {
///   "case": "builtin:case14",
///   "sampling": { "seed": 0, "n_unary_actions": 20, "n_ref_samples": 10000, "n_per_unary": 200,
///                 "n_double_actions": 100, "n_per_double": 50 },
///   "train": { "epochs": 100, "batch_size": 64, "learning_rate": 0.001 },
///   "models": ["leap", "baseline"],
///   "seeds": [0, 1, 2, 3, 4],
///   "out_dir": "runs/case14"
/// }
/// ```
///
/// `case` is either `builtin:<name>` or a MATPOWER file path, relative to the
/// config file. `out_dir` is relative to the working directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub case: String,
    #[serde(default)]
    pub actions: ActionConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub model: ModelOptions,
    #[serde(default)]
    pub train: TrainOptions,
    pub models: Vec<ModelKind>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    #[serde(default = "default_bench_samples")]
    pub bench_samples: usize,
    /// Directory the config was loaded from; relative case paths resolve here.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_bench_samples() -> usize {
    10_000
}

/// Overrides of the default architecture sizing.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOptions {
    pub hidden: Option<usize>,
    pub encoder_layers: Option<usize>,
    pub decoder_layers: Option<usize>,
    pub units_per_action: Option<usize>,
    pub latent_activation: Option<Activation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Metrics are written every `eval_every` epochs and at the last epoch.
    pub eval_every: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { epochs: 100, batch_size: 64, learning_rate: 1e-3, eval_every: 1 }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))
            .fail_as(Failure::Input)?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .with_context(|| format!("invalid config {}", path.display()))
            .fail_as(Failure::Input)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate().fail_as(Failure::Input)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.sampling.validate()?;
        let mut seen = HashSet::new();
        if let Some(dup) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            bail!("seed {dup} is listed twice");
        }
        if self.train.batch_size == 0 || self.train.eval_every == 0 {
            bail!("batch_size and eval_every must be positive");
        }
        if self.train.learning_rate.is_nan() || self.train.learning_rate <= 0.0 {
            bail!("learning_rate must be positive");
        }
        if self.case_path().is_some_and(|p| !p.exists()) {
            bail!("case file {} does not exist", self.case_path().unwrap().display());
        }
        Ok(())
    }

    fn case_path(&self) -> Option<PathBuf> {
        (!self.case.starts_with("builtin:")).then(|| self.base_dir.join(&self.case))
    }

    pub fn load_grid(&self) -> anyhow::Result<GridCase> {
        let grid = match self.case.strip_prefix("builtin:") {
            Some(name) => cases::builtin(name)?,
            None => {
                let path = self.base_dir.join(&self.case);
                let text =
                    fs::read_to_string(&path).with_context(|| format!("cannot read case file {}", path.display()))?;
                parse_matpower_case(&text).with_context(|| format!("in case file {}", path.display()))?
            }
        };
        Ok(grid)
    }

    pub fn leap_config(&self, n_x: usize, n_tau: usize, n_y: usize) -> LeapConfig {
        let d = LeapConfig::for_dims(n_x, n_tau, n_y);
        let m = &self.model;
        LeapConfig {
            hidden: m.hidden.unwrap_or(d.hidden),
            encoder_layers: m.encoder_layers.unwrap_or(d.encoder_layers),
            decoder_layers: m.decoder_layers.unwrap_or(d.decoder_layers),
            units_per_action: m.units_per_action.unwrap_or(d.units_per_action),
            latent_activation: m.latent_activation.unwrap_or(d.latent_activation),
            ..d
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> anyhow::Result<ExperimentConfig> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse(r#"{"case": "builtin:case14", "models": ["leap"], "seeds": [1], "out_dir": "x"}"#).unwrap();
        assert_eq!(cfg.train, TrainOptions::default());
        assert_eq!(cfg.sampling.load_range, (0.7, 1.3));
        assert_eq!(cfg.bench_samples, 10_000);
        assert_eq!(cfg.leap_config(16, 26, 20), LeapConfig::for_dims(16, 26, 20));
    }

    #[test]
    fn duplicate_seeds_rejected() {
        assert!(parse(r#"{"case": "builtin:case14", "models": ["leap"], "seeds": [1, 1], "out_dir": "x"}"#).is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse(r#"{"case": "builtin:case14", "models": [], "seeds": [], "out_dir": "x", "epochs": 3}"#).is_err());
    }

    #[test]
    fn missing_case_file_named() {
        let err = parse(r#"{"case": "nowhere/case.m", "models": [], "seeds": [], "out_dir": "x"}"#).unwrap_err();
        assert!(err.to_string().contains("nowhere/case.m"));
    }

    #[test]
    fn model_overrides_apply() {
        let cfg = parse(
            r#"{"case": "builtin:case14", "models": ["baseline"], "seeds": [], "out_dir": "x",
                "model": {"hidden": 48, "latent_activation": "relu"}}"#,
        )
        .unwrap();
        let lc = cfg.leap_config(16, 26, 20);
        assert_eq!(lc.hidden, 48);
        assert_eq!(lc.latent_activation, Activation::Relu);
    }
}
