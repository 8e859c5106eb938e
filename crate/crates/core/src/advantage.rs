//! Group-relative advantage estimators.
//!
//! Every estimator maps a group of rewards to `(r_i - center) / scale`:
//!
//! | estimator          | center                     | scale                                      |
//! |--------------------|----------------------------|--------------------------------------------|
//! | `grpo`             | group mean                 | sample std of the group                    |
//! | `gapo-median-div`  | median of the HDI          | `sqrt(sum_j (r_j - center)^2 / (G - 1))`   |
//! | `gapo-median-std`  | median of the HDI          | sample std of the group                    |
//! | `gapo-mean-div`    | mean of the HDI            | `sqrt(sum_j (r_j - center)^2 / (G - 1))`   |
//!
//! The `div` scale sums over the whole group, outliers included. A group whose
//! scale falls below the degenerate threshold (or with a single rollout)
//! carries no signal and gets all-zero advantages.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GapoError, Result};
use crate::hdi::{self, HdiConfig};

pub const DEFAULT_DEGENERATE_THRESHOLD: f64 = 1e-8;

/// One prompt's rollout rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardGroup {
    pub prompt_id: String,
    pub rewards: Vec<f64>,
}

impl RewardGroup {
    /// Builds a group, requiring at least one reward and every reward in `[0, 1]`.
    pub fn new(prompt_id: impl Into<String>, rewards: Vec<f64>) -> Result<Self> {
        let group = Self {
            prompt_id: prompt_id.into(),
            rewards,
        };
        group.validate()?;
        Ok(group)
    }

    pub fn validate(&self) -> Result<()> {
        hdi::check_rewards(&self.rewards)?;
        if let Some((index, &value)) = self
            .rewards
            .iter()
            .enumerate()
            .find(|(_, r)| !(0.0..=1.0).contains(*r))
        {
            return Err(GapoError::InvalidReward { index, value });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// All rewards identical (all-pass, all-fail, or any other constant).
    pub fn is_constant(&self) -> bool {
        is_constant(&self.rewards)
    }
}

pub(crate) fn is_constant(rewards: &[f64]) -> bool {
    rewards.windows(2).all(|w| w[0] == w[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Grpo,
    #[default]
    GapoMedianDiv,
    GapoMedianStd,
    GapoMeanDiv,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [
        Estimator::Grpo,
        Estimator::GapoMedianDiv,
        Estimator::GapoMedianStd,
        Estimator::GapoMeanDiv,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Grpo => "grpo",
            Estimator::GapoMedianDiv => "gapo-median-div",
            Estimator::GapoMedianStd => "gapo-median-std",
            Estimator::GapoMeanDiv => "gapo-mean-div",
        }
    }

    pub fn is_gapo(self) -> bool {
        self != Estimator::Grpo
    }

    /// The estimators whose scale is recomputed around their own center.
    pub fn is_div(self) -> bool {
        matches!(self, Estimator::GapoMedianDiv | Estimator::GapoMeanDiv)
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = GapoError;

    /// Accepts both `gapo-median-div` and `gapo_median_div` spellings.
    fn from_str(s: &str) -> Result<Self> {
        let normalized = s.trim().to_ascii_lowercase().replace('_', "-");
        Estimator::ALL
            .into_iter()
            .find(|e| e.as_str() == normalized)
            .ok_or_else(|| GapoError::InvalidConfig(format!("unknown estimator `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvantageConfig {
    pub estimator: Estimator,
    pub tau: f64,
    pub degenerate_threshold: f64,
}

impl AdvantageConfig {
    pub fn new(estimator: Estimator, tau: f64) -> Self {
        Self {
            estimator,
            tau,
            degenerate_threshold: DEFAULT_DEGENERATE_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        HdiConfig { tau: self.tau }.validate()?;
        if !(self.degenerate_threshold > 0.0 && self.degenerate_threshold.is_finite()) {
            return Err(GapoError::InvalidConfig(format!(
                "degenerate threshold must be positive, got {}",
                self.degenerate_threshold
            )));
        }
        Ok(())
    }

    fn hdi(&self) -> HdiConfig {
        HdiConfig { tau: self.tau }
    }
}

impl Default for AdvantageConfig {
    fn default() -> Self {
        Self::new(Estimator::default(), hdi::DEFAULT_TAU)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAdvantages {
    pub advantages: Vec<f64>,
    /// Mean for GRPO, adaptive Q for the GAPO variants.
    pub center: f64,
    pub denominator: f64,
    pub degenerate: bool,
    /// Number of strictly negative advantages.
    pub negative_count: usize,
}

impl GroupAdvantages {
    pub fn positive_count(&self) -> usize {
        self.advantages.iter().filter(|&&a| a > 0.0).count()
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Root of `sum_j (r_j - center)^2 / (G - 1)`; zero for a single reward.
fn spread_about(rewards: &[f64], center: f64) -> f64 {
    if rewards.len() < 2 {
        return 0.0;
    }
    let ss: f64 = rewards.iter().map(|r| (r - center) * (r - center)).sum();
    (ss / (rewards.len() - 1) as f64).sqrt()
}

fn normalize(rewards: &[f64], center: f64, denominator: f64, threshold: f64) -> GroupAdvantages {
    let degenerate = rewards.len() < 2 || denominator.is_nan() || denominator < threshold;
    let advantages: Vec<f64> = if degenerate {
        vec![0.0; rewards.len()]
    } else {
        rewards.iter().map(|r| (r - center) / denominator).collect()
    };
    let negative_count = advantages.iter().filter(|&&a| a < 0.0).count();
    GroupAdvantages {
        advantages,
        center,
        denominator,
        degenerate,
        negative_count,
    }
}

/// Advantages for any finite rewards (not restricted to `[0, 1]`), so affine
/// images of a group can be compared directly.
pub fn advantages_for(rewards: &[f64], config: &AdvantageConfig) -> Result<GroupAdvantages> {
    config.validate()?;
    hdi::check_rewards(rewards)?;
    let threshold = config.degenerate_threshold;

    let out = match config.estimator {
        Estimator::Grpo => {
            let m = mean(rewards);
            normalize(rewards, m, spread_about(rewards, m), threshold)
        }
        Estimator::GapoMedianStd => {
            let q = hdi::adaptive_q(rewards, config.hdi())?;
            let std = spread_about(rewards, mean(rewards));
            normalize(rewards, q, std, threshold)
        }
        Estimator::GapoMedianDiv => {
            let q = hdi::adaptive_q(rewards, config.hdi())?;
            normalize(rewards, q, spread_about(rewards, q), threshold)
        }
        Estimator::GapoMeanDiv => {
            let q = hdi::find_hdi(rewards, config.hdi())?.mean();
            normalize(rewards, q, spread_about(rewards, q), threshold)
        }
    };
    Ok(out)
}

/// Mean-centered, std-scaled advantages. Ignores `config.estimator`.
pub fn grpo_advantage(group: &RewardGroup, config: &AdvantageConfig) -> Result<GroupAdvantages> {
    advantages_for(
        &group.rewards,
        &AdvantageConfig {
            estimator: Estimator::Grpo,
            ..*config
        },
    )
}

/// HDI-centered advantages; `config.estimator` must be one of the GAPO variants.
pub fn gapo_advantage(group: &RewardGroup, config: &AdvantageConfig) -> Result<GroupAdvantages> {
    if !config.estimator.is_gapo() {
        return Err(GapoError::InvalidConfig(format!(
            "`{}` is not a GAPO estimator",
            config.estimator
        )));
    }
    advantages_for(&group.rewards, config)
}

/// Dispatches on `config.estimator`.
pub fn compute_advantages(
    group: &RewardGroup,
    config: &AdvantageConfig,
) -> Result<GroupAdvantages> {
    advantages_for(&group.rewards, config)
}

/// Splits a batch into groups that carry signal and the ids of constant
/// groups, preserving order.
pub fn dynamic_sample_filter(groups: Vec<RewardGroup>) -> (Vec<RewardGroup>, Vec<String>) {
    let mut kept = Vec::with_capacity(groups.len());
    let mut dropped = Vec::new();
    for group in groups {
        if group.is_constant() {
            dropped.push(group.prompt_id);
        } else {
            kept.push(group);
        }
    }
    (kept, dropped)
}
