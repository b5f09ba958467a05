//! Flat `section.key = value` experiment configuration.
//!
//! Lines starting with `#` and blank lines are ignored. Every key has a
//! default (see [`KEYS`]); files and `--set section.key=value` overrides may
//! only name known keys. [`ExperimentConfig::render`] writes the fully
//! resolved configuration back in the same syntax.

use std::collections::BTreeMap;
use std::path::PathBuf;

use dac_core::noise::{NoiseKind, NoiseSpec};
use dac_core::pipeline::{EliminationRule, TrainConfig};

/// `(key, default, description)` for every accepted key, in render order.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("run.seed", "0", "experiment seed; every other seed is derived from it"),
    ("data.train", "", "training dataset file"),
    ("data.val", "", "clean validation dataset file"),
    ("data.test", "", "held-out evaluation file; clean falls back to data.val"),
    ("data.k", "4", "number of real classes for generate"),
    ("data.d", "2", "feature dimension for generate"),
    ("data.n_per_class", "1000", "samples per class for generate"),
    ("data.separation", "8", "minimum distance between class centers"),
    ("noise.kind", "none", "none | uniform | circular | smudge | degradation | class"),
    ("noise.fraction", "0.1", "selected fraction for uniform, smudge and degradation"),
    ("noise.eta", "0.3", "flip probability for circular"),
    ("noise.magnitude", "10", "smudge value"),
    ("noise.width", "2", "number of leading coordinates a smudge overwrites"),
    ("noise.blend", "0.8", "degradation blend toward the mean"),
    ("noise.class", "0", "target class for class randomization"),
    ("train.epochs", "200", "total epochs E"),
    ("train.warmup", "20", "abstention-free epochs L"),
    ("train.rho", "64", "alpha initialization divisor"),
    ("train.mu", "0.05", "moving-average rate"),
    ("train.alpha_final", "1", "alpha reached at the end of the ramp"),
    ("train.fixed_alpha", "none", "none, a number, or inf (abstention output disabled)"),
    ("train.hidden", "64,64", "hidden layer widths"),
    ("train.lr", "0.1", "initial learning rate"),
    ("train.anneal_epochs", "60,120,160", "epochs at which the learning rate is multiplied by anneal_factor"),
    ("train.anneal_factor", "0.5", "learning-rate multiplier at each anneal epoch"),
    ("train.momentum", "0.9", "momentum coefficient"),
    ("train.weight_decay", "5e-4", "L2 weight decay"),
    ("train.nesterov", "true", "Nesterov momentum"),
    ("train.batch_size", "64", "mini-batch size"),
    ("train.elimination", "abstained", "abstained | misclassified"),
    ("sweep.alphas", "0.001,1000000", "fixed alphas for the sweep command"),
    ("sweep.threads", "1", "worker threads for the sweep command"),
    ("output.dir", "out", "output directory"),
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `section.key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value {value:?} for `{key}`: {reason}")]
    Value { key: String, value: String, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    values: BTreeMap<String, String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl ExperimentConfig {
    /// Defaults overlaid with the contents of a configuration file.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(ConfigError::UnknownKey(key.to_string())),
        }
    }

    /// Applies one `section.key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let (key, value) = spec.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: spec.to_string(),
        })?;
        self.set(key.trim(), value.trim())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (key, _, doc) in KEYS {
            out.push_str(&format!("# {doc}\n{key} = {}\n", self.get(key)));
        }
        out
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let value = self.get(key);
        value.parse().map_err(|e: T::Err| ConfigError::Value {
            key: key.to_string(),
            value: value.to_string(),
            reason: e.to_string(),
        })
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let value = self.get(key);
        value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|e: T::Err| ConfigError::Value {
                    key: key.to_string(),
                    value: value.to_string(),
                    reason: e.to_string(),
                })
            })
            .collect()
    }

    fn bad(&self, key: &str, reason: &str) -> ConfigError {
        ConfigError::Value {
            key: key.to_string(),
            value: self.get(key).to_string(),
            reason: reason.to_string(),
        }
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.parsed("run.seed")
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.get(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    pub fn output_dir(&self) -> PathBuf {
        PathBuf::from(self.get("output.dir"))
    }

    /// `(k, d, n_per_class, separation)` for blob generation.
    pub fn blobs(&self) -> Result<(usize, usize, usize, f64), ConfigError> {
        Ok((
            self.parsed("data.k")?,
            self.parsed("data.d")?,
            self.parsed("data.n_per_class")?,
            self.parsed("data.separation")?,
        ))
    }

    pub fn noise_spec(&self, seed: u64) -> Result<NoiseSpec, ConfigError> {
        let kind = match self.get("noise.kind") {
            "none" => NoiseKind::None,
            "uniform" => NoiseKind::Uniform {
                fraction: self.parsed("noise.fraction")?,
            },
            "circular" => NoiseKind::ClassDependentCircular {
                eta: self.parsed("noise.eta")?,
            },
            "smudge" => NoiseKind::Smudge {
                fraction: self.parsed("noise.fraction")?,
                magnitude: self.parsed("noise.magnitude")?,
                width: self.parsed("noise.width")?,
            },
            "degradation" => NoiseKind::Degradation {
                fraction: self.parsed("noise.fraction")?,
                blend: self.parsed("noise.blend")?,
            },
            "class" => NoiseKind::ClassRandomization {
                class: self.parsed("noise.class")?,
            },
            _ => return Err(self.bad("noise.kind", "unknown noise kind")),
        };
        Ok(NoiseSpec { kind, seed })
    }

    pub fn train_config(&self) -> Result<TrainConfig, ConfigError> {
        let fixed_alpha = match self.get("train.fixed_alpha") {
            "none" | "" => None,
            "inf" => Some(f64::INFINITY),
            _ => Some(self.parsed("train.fixed_alpha")?),
        };
        let elimination = match self.get("train.elimination") {
            "abstained" => EliminationRule::Abstained,
            "misclassified" => EliminationRule::Misclassified,
            _ => return Err(self.bad("train.elimination", "expected abstained or misclassified")),
        };
        let config = TrainConfig {
            epochs: self.parsed("train.epochs")?,
            warmup: self.parsed("train.warmup")?,
            rho: self.parsed("train.rho")?,
            mu: self.parsed("train.mu")?,
            alpha_final: self.parsed("train.alpha_final")?,
            fixed_alpha,
            hidden: self.list("train.hidden")?,
            initial_lr: self.parsed("train.lr")?,
            anneal_epochs: self.list("train.anneal_epochs")?,
            anneal_factor: self.parsed("train.anneal_factor")?,
            momentum: self.parsed("train.momentum")?,
            weight_decay: self.parsed("train.weight_decay")?,
            nesterov: self.parsed("train.nesterov")?,
            batch_size: self.parsed("train.batch_size")?,
            seed: self.seed()?,
            elimination,
        };
        config.validate().map_err(|e| ConfigError::Value {
            key: "train".into(),
            value: String::new(),
            reason: e.to_string(),
        })?;
        Ok(config)
    }

    pub fn sweep_alphas(&self) -> Result<Vec<f64>, ConfigError> {
        let alphas: Vec<f64> = self.list("sweep.alphas")?;
        if alphas.is_empty() {
            return Err(self.bad("sweep.alphas", "at least one alpha is required"));
        }
        Ok(alphas)
    }

    pub fn sweep_threads(&self) -> Result<usize, ConfigError> {
        let threads: usize = self.parsed("sweep.threads")?;
        if threads == 0 {
            return Err(self.bad("sweep.threads", "must be positive"));
        }
        Ok(threads)
    }
}
