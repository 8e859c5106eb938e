use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::policy::{sample_from, EditTask, TabularPolicy};
use crate::advantage::RewardGroup;
use crate::analysis::SkewLabel;
use crate::error::{GapoError, Result};
use crate::reward::composite_reward;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierMode {
    /// Replace `r` with a draw from `[0, 0.2 r]`.
    #[default]
    LowTail,
    /// Replace `r` with a draw from `[r + 0.8 (1 - r), 1]`.
    HighTail,
    /// Replace `r` with a draw from `[0, 1]`.
    Uniform,
}

impl OutlierMode {
    pub fn as_str(self) -> &'static str {
        match self {
            OutlierMode::LowTail => "low_tail",
            OutlierMode::HighTail => "high_tail",
            OutlierMode::Uniform => "uniform",
        }
    }
}

impl fmt::Display for OutlierMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OutlierMode {
    type Err = GapoError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "low_tail" => Ok(OutlierMode::LowTail),
            "high_tail" => Ok(OutlierMode::HighTail),
            "uniform" => Ok(OutlierMode::Uniform),
            _ => Err(GapoError::InvalidConfig(format!(
                "unknown outlier mode `{s}`"
            ))),
        }
    }
}

/// Reward-level corruption applied independently to each rollout.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OutlierSpec {
    pub probability: f64,
    pub mode: OutlierMode,
}

impl OutlierSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(GapoError::InvalidConfig(format!(
                "outlier probability must be in [0, 1], got {}",
                self.probability
            )));
        }
        Ok(())
    }

    /// Returns the observed reward and whether it was replaced. Always draws
    /// one uniform for the coin and one more when corrupting.
    pub fn apply<R: Rng + ?Sized>(&self, reward: f64, rng: &mut R) -> (f64, bool) {
        let coin: f64 = rng.random();
        if coin >= self.probability {
            return (reward, false);
        }
        let u: f64 = rng.random();
        let (lo, hi) = match self.mode {
            OutlierMode::LowTail => (0.0, 0.2 * reward),
            OutlierMode::HighTail => (reward + 0.8 * (1.0 - reward), 1.0),
            OutlierMode::Uniform => (0.0, 1.0),
        };
        ((lo + u * (hi - lo)).clamp(0.0, 1.0), true)
    }
}

/// One prompt's sampled rollouts.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub sequences: Vec<Vec<usize>>,
    /// Observed (possibly corrupted) rewards.
    pub group: RewardGroup,
    /// Rewards before corruption.
    pub clean_rewards: Vec<f64>,
    pub corrupted: Vec<bool>,
}

impl Rollout {
    pub fn exact_matches(&self, task: &EditTask) -> usize {
        self.sequences.iter().filter(|s| **s == task.target).count()
    }
}

/// Samples `group_size` sequences from `policy`, scores them against the task
/// target and injects outliers.
pub fn rollout_group<R: Rng + ?Sized>(
    policy: &TabularPolicy,
    task: &EditTask,
    group_size: usize,
    outlier: &OutlierSpec,
    rng: &mut R,
) -> Result<Rollout> {
    policy.check_task(task)?;
    outlier.validate()?;
    if group_size == 0 {
        return Err(GapoError::EmptyGroup);
    }

    let table = policy.probability_table();
    let mut sequences = Vec::with_capacity(group_size);
    let mut clean_rewards = Vec::with_capacity(group_size);
    let mut rewards = Vec::with_capacity(group_size);
    let mut corrupted = Vec::with_capacity(group_size);
    for _ in 0..group_size {
        let seq = sample_from(&table, rng);
        let clean = composite_reward(&seq, &task.target).get();
        let (observed, hit) = outlier.apply(clean, rng);
        sequences.push(seq);
        clean_rewards.push(clean);
        rewards.push(observed);
        corrupted.push(hit);
    }

    Ok(Rollout {
        sequences,
        group: RewardGroup::new(task.prompt_id.clone(), rewards)?,
        clean_rewards,
        corrupted,
    })
}

/// Synthetic group whose shape is built to carry `label`:
///
/// * `ApproxNormal`: mirror pairs around a random center, zero skewness.
/// * `LeftSkewed`: a tight high cluster plus one low outlier.
/// * `RightSkewed`: the reflection of a left-skewed group.
/// * `Degenerate`: one repeated value.
pub fn skewed_group<R: Rng + ?Sized>(label: SkewLabel, group_size: usize, rng: &mut R) -> Vec<f64> {
    let mut rewards = match label {
        SkewLabel::Degenerate => vec![rng.random_range(0.0..=1.0); group_size],
        SkewLabel::ApproxNormal => {
            let center = rng.random_range(0.3..0.7);
            let mut r = Vec::with_capacity(group_size);
            for _ in 0..group_size / 2 {
                let d = rng.random_range(0.0..0.25);
                r.push(center - d);
                r.push(center + d);
            }
            if group_size % 2 == 1 {
                r.push(center);
            }
            r
        }
        SkewLabel::LeftSkewed => left_tail(group_size, rng),
        SkewLabel::RightSkewed => left_tail(group_size, rng)
            .into_iter()
            .map(|x| 1.0 - x)
            .collect(),
    };
    rewards.shuffle(rng);
    rewards
}

fn left_tail<R: Rng + ?Sized>(group_size: usize, rng: &mut R) -> Vec<f64> {
    let mut r: Vec<f64> = (1..group_size)
        .map(|_| rng.random_range(0.75..0.95))
        .collect();
    r.push(rng.random_range(0.0..0.3));
    r
}
