use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::rollout::{OutlierMode, OutlierSpec};
use crate::advantage::{AdvantageConfig, Estimator};
use crate::error::{GapoError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Rollouts per prompt (G).
    pub group_size: usize,
    /// Clip range of the importance ratio.
    pub epsilon: f64,
    /// KL penalty coefficient.
    pub beta: f64,
    pub learning_rate: f64,
    pub steps: usize,
    /// Gradient steps taken against each sampling snapshot.
    pub inner_epochs: usize,
    pub advantage: AdvantageConfig,
    pub outlier: OutlierSpec,
    pub seed: u64,
    /// Drop constant-reward groups before the update.
    pub dynamic_sampling: bool,
    pub prompts: usize,
    pub length: usize,
    pub vocab: usize,
    /// Sampled rollouts per task when estimating the evaluation reward.
    pub eval_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            epsilon: 0.2,
            beta: 0.01,
            learning_rate: 8.0,
            steps: 300,
            inner_epochs: 2,
            advantage: AdvantageConfig::default(),
            outlier: OutlierSpec::none(),
            seed: 0,
            dynamic_sampling: false,
            prompts: 32,
            length: 6,
            vocab: 5,
            eval_samples: 64,
        }
    }
}

const KEYS: &[&str] = &[
    "group_size",
    "epsilon",
    "beta",
    "learning_rate",
    "steps",
    "inner_epochs",
    "estimator",
    "tau",
    "degenerate_threshold",
    "outlier_probability",
    "outlier_mode",
    "seed",
    "dynamic_sampling",
    "prompts",
    "length",
    "vocab",
    "eval_samples",
];

fn invalid(key: &str, value: &str) -> GapoError {
    GapoError::InvalidConfig(format!("invalid value `{value}` for key `{key}`"))
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| invalid(key, value))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(GapoError::InvalidConfig(msg));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return fail(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return fail(format!("beta must be non-negative, got {}", self.beta));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.group_size < 2 {
            return fail(format!(
                "group_size must be at least 2, got {}",
                self.group_size
            ));
        }
        if self.length == 0 || self.vocab < 2 {
            return fail("length must be >= 1 and vocab >= 2".into());
        }
        self.advantage.validate()?;
        self.outlier.validate()
    }

    /// Parses `key = value` lines. Blank lines and `#` comments are ignored;
    /// unset keys keep their defaults.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                GapoError::InvalidConfig(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            config.set(key.trim(), value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "group_size" => self.group_size = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "inner_epochs" => self.inner_epochs = parse(key, value)?,
            "estimator" => {
                self.advantage.estimator = value
                    .parse::<Estimator>()
                    .map_err(|_| invalid(key, value))?
            }
            "tau" => self.advantage.tau = parse(key, value)?,
            "degenerate_threshold" => self.advantage.degenerate_threshold = parse(key, value)?,
            "outlier_probability" => self.outlier.probability = parse(key, value)?,
            "outlier_mode" => {
                self.outlier.mode = value
                    .parse::<OutlierMode>()
                    .map_err(|_| invalid(key, value))?
            }
            "seed" => self.seed = parse(key, value)?,
            "dynamic_sampling" => self.dynamic_sampling = parse(key, value)?,
            "prompts" => self.prompts = parse(key, value)?,
            "length" => self.length = parse(key, value)?,
            "vocab" => self.vocab = parse(key, value)?,
            "eval_samples" => self.eval_samples = parse(key, value)?,
            _ => return Err(GapoError::InvalidConfig(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Serializes every key in the format [`from_kv_str`](Self::from_kv_str) reads.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for &key in KEYS {
            let value = match key {
                "group_size" => self.group_size.to_string(),
                "epsilon" => self.epsilon.to_string(),
                "beta" => self.beta.to_string(),
                "learning_rate" => self.learning_rate.to_string(),
                "steps" => self.steps.to_string(),
                "inner_epochs" => self.inner_epochs.to_string(),
                "estimator" => self.advantage.estimator.to_string(),
                "tau" => self.advantage.tau.to_string(),
                "degenerate_threshold" => self.advantage.degenerate_threshold.to_string(),
                "outlier_probability" => self.outlier.probability.to_string(),
                "outlier_mode" => self.outlier.mode.to_string(),
                "seed" => self.seed.to_string(),
                "dynamic_sampling" => self.dynamic_sampling.to_string(),
                "prompts" => self.prompts.to_string(),
                "length" => self.length.to_string(),
                "vocab" => self.vocab.to_string(),
                "eval_samples" => self.eval_samples.to_string(),
                _ => unreachable!(),
            };
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}
