//! Run configuration: documented defaults, a flat key=value config file,
//! and command-line overrides, merged in that order. The fully resolved
//! configuration is echoed into every output artifact.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use mdn_core::data::{SchemaSpec, DEFAULT_VOCAB_CAP};
use mdn_core::model::{Activation, MdnConfig, DEFAULT_SIGMA_FLOOR};
use mdn_core::optim::{OptimizerKind, OptimizerSpec};
use mdn_core::score::ThresholdPolicy;
use mdn_core::train::TrainConfig;
use thiserror::Error;

/// Environment variable naming a config file to load when --config is not
/// given.
pub const CONFIG_ENV_VAR: &str = "MDN_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("config key `{key}`: {message}")]
    Value { key: String, message: String },
    #[error("unknown config key `{key}`")]
    UnknownKey { key: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // model
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub num_components: usize,
    pub sigma_floor: f64,
    // training
    pub epochs: usize,
    pub batch_size: usize,
    pub val_fraction: f64,
    pub seed: u64,
    /// None resolves to min(10, epochs).
    pub variance_window: Option<usize>,
    pub shuffle_each_epoch: bool,
    // optimizer
    pub optimizer: OptimizerKind,
    /// None means the chosen optimizer's standard default.
    pub learning_rate: Option<f64>,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    // scoring
    pub threshold_policy: ThresholdPolicy,
    // schema
    pub numeric_columns: Vec<String>,
    pub categorical_columns: Vec<String>,
    pub vocab_cap: usize,
    pub target_column: String,
    pub label_column: Option<String>,
    pub drop_columns: Vec<String>,
}

impl Default for RunConfig {
    /// Defaults target the synthetic CSV layout (`x`, `y`, `label`); real
    /// datasets supply their schema through a config file.
    fn default() -> Self {
        RunConfig {
            hidden_dims: vec![64, 32],
            activation: Activation::Relu,
            num_components: 5,
            sigma_floor: DEFAULT_SIGMA_FLOOR,
            epochs: 50,
            batch_size: 256,
            val_fraction: 0.2,
            seed: 42,
            variance_window: None,
            shuffle_each_epoch: true,
            optimizer: OptimizerKind::AdamW,
            learning_rate: None,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-2,
            threshold_policy: ThresholdPolicy::default(),
            numeric_columns: vec!["x".into()],
            categorical_columns: Vec::new(),
            vocab_cap: DEFAULT_VOCAB_CAP,
            target_column: "y".into(),
            label_column: Some("label".into()),
            drop_columns: Vec::new(),
        }
    }
}

fn parse_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn policy_to_string(policy: &ThresholdPolicy) -> String {
    match policy {
        ThresholdPolicy::Quantile(q) => format!("quantile:{q}"),
        ThresholdPolicy::MeanPlusKSigma(k) => format!("mean_plus_k_sigma:{k}"),
        ThresholdPolicy::Fixed(v) => format!("fixed:{v}"),
    }
}

impl RunConfig {
    /// Defaults, then `MDN_CONFIG`/`--config` file values, then flag
    /// overrides applied by the caller.
    pub fn load(config_path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = RunConfig::default();
        let env_path = std::env::var(CONFIG_ENV_VAR).ok();
        let path: Option<std::path::PathBuf> = match config_path {
            Some(p) => Some(p.to_path_buf()),
            None => env_path.map(Into::into),
        };
        if let Some(path) = path {
            config.merge_file(&path)?;
        }
        Ok(config)
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = fs::read_to_string(path)?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Line {
                line: i + 1,
                message: format!("expected key=value, found `{line}`"),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Set one configuration key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |message: String| ConfigError::Value {
            key: key.to_string(),
            message,
        };
        let parse_f64 = |v: &str| v.parse::<f64>().map_err(|e| bad(e.to_string()));
        let parse_usize = |v: &str| v.parse::<usize>().map_err(|e| bad(e.to_string()));
        match key {
            "hidden_dims" => {
                self.hidden_dims = if value == "-" || value.is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|p| p.trim().parse::<usize>().map_err(|e| bad(e.to_string())))
                        .collect::<Result<_, _>>()?
                };
            }
            "activation" => {
                self.activation = Activation::from_str(value).map_err(|e| bad(e.to_string()))?
            }
            "num_components" => self.num_components = parse_usize(value)?,
            "sigma_floor" => self.sigma_floor = parse_f64(value)?,
            "epochs" => self.epochs = parse_usize(value)?,
            "batch_size" => self.batch_size = parse_usize(value)?,
            "val_fraction" => self.val_fraction = parse_f64(value)?,
            "seed" => self.seed = value.parse().map_err(|_| bad("expected u64".into()))?,
            "variance_window" => self.variance_window = Some(parse_usize(value)?),
            "shuffle_each_epoch" => {
                self.shuffle_each_epoch = match value {
                    "true" | "1" => true,
                    "false" | "0" => false,
                    other => return Err(bad(format!("expected true/false, got `{other}`"))),
                }
            }
            "optimizer" => {
                self.optimizer = OptimizerKind::from_str(value).map_err(|e| bad(e.to_string()))?
            }
            "learning_rate" => self.learning_rate = Some(parse_f64(value)?),
            "momentum" => self.momentum = parse_f64(value)?,
            "beta1" => self.beta1 = parse_f64(value)?,
            "beta2" => self.beta2 = parse_f64(value)?,
            "epsilon" => self.epsilon = parse_f64(value)?,
            "weight_decay" => self.weight_decay = parse_f64(value)?,
            "threshold_policy" => {
                self.threshold_policy =
                    ThresholdPolicy::from_str(value).map_err(|e| bad(e.to_string()))?
            }
            "numeric_columns" => self.numeric_columns = parse_list(value),
            "categorical_columns" => self.categorical_columns = parse_list(value),
            "vocab_cap" => self.vocab_cap = parse_usize(value)?,
            "target_column" => self.target_column = value.to_string(),
            "label_column" => {
                self.label_column = if value.is_empty() || value == "-" {
                    None
                } else {
                    Some(value.to_string())
                }
            }
            "drop_columns" => self.drop_columns = parse_list(value),
            other => {
                return Err(ConfigError::UnknownKey {
                    key: other.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Canonically ordered key=value pairs for provenance echoes.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let list = |v: &[String]| v.join(",");
        let dims = if self.hidden_dims.is_empty() {
            "-".to_string()
        } else {
            self.hidden_dims
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        vec![
            ("hidden_dims".into(), dims),
            ("activation".into(), self.activation.name().into()),
            ("num_components".into(), self.num_components.to_string()),
            ("sigma_floor".into(), format!("{}", self.sigma_floor)),
            ("epochs".into(), self.epochs.to_string()),
            ("batch_size".into(), self.batch_size.to_string()),
            ("val_fraction".into(), format!("{}", self.val_fraction)),
            ("seed".into(), self.seed.to_string()),
            (
                "variance_window".into(),
                self.resolved_variance_window().to_string(),
            ),
            (
                "shuffle_each_epoch".into(),
                self.shuffle_each_epoch.to_string(),
            ),
            ("optimizer".into(), self.optimizer.name().into()),
            (
                "learning_rate".into(),
                format!("{}", self.optimizer_spec().learning_rate),
            ),
            ("momentum".into(), format!("{}", self.momentum)),
            ("beta1".into(), format!("{}", self.beta1)),
            ("beta2".into(), format!("{}", self.beta2)),
            ("epsilon".into(), format!("{}", self.epsilon)),
            ("weight_decay".into(), format!("{}", self.weight_decay)),
            (
                "threshold_policy".into(),
                policy_to_string(&self.threshold_policy),
            ),
            ("numeric_columns".into(), list(&self.numeric_columns)),
            (
                "categorical_columns".into(),
                list(&self.categorical_columns),
            ),
            ("vocab_cap".into(), self.vocab_cap.to_string()),
            ("target_column".into(), self.target_column.clone()),
            (
                "label_column".into(),
                self.label_column.clone().unwrap_or_else(|| "-".into()),
            ),
            ("drop_columns".into(), list(&self.drop_columns)),
        ]
    }

    pub fn resolved_variance_window(&self) -> usize {
        self.variance_window.unwrap_or_else(|| self.epochs.min(10)).max(1)
    }

    pub fn optimizer_spec(&self) -> OptimizerSpec {
        let mut spec = OptimizerSpec::default_for(self.optimizer);
        if let Some(lr) = self.learning_rate {
            spec.learning_rate = lr;
        }
        spec.momentum = self.momentum;
        spec.beta1 = self.beta1;
        spec.beta2 = self.beta2;
        spec.epsilon = self.epsilon;
        spec.weight_decay = self.weight_decay;
        spec
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: self.optimizer_spec(),
            val_fraction: self.val_fraction,
            seed: self.seed,
            variance_window: self.resolved_variance_window(),
            shuffle_each_epoch: self.shuffle_each_epoch,
        }
    }

    pub fn mdn_config(&self, input_dim: usize) -> MdnConfig {
        MdnConfig {
            input_dim,
            hidden_dims: self.hidden_dims.clone(),
            activation: self.activation,
            num_components: self.num_components,
            sigma_floor: self.sigma_floor,
        }
    }

    pub fn schema_spec(&self) -> SchemaSpec {
        SchemaSpec {
            numeric_columns: self.numeric_columns.clone(),
            categorical_columns: self.categorical_columns.clone(),
            vocab_cap: self.vocab_cap,
            target_column: self.target_column.clone(),
            label_column: self.label_column.clone(),
            drop_columns: self.drop_columns.clone(),
        }
    }
}
