//! JSONL wire records.

use serde::{Deserialize, Serialize};

use gapo_core::{GroupAdvantages, RewardGroup, SkewLabel};

/// One input group: `{"prompt_id": "...", "rewards": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub prompt_id: String,
    pub rewards: Vec<f64>,
}

impl GroupRecord {
    pub fn into_group(self) -> gapo_core::Result<RewardGroup> {
        RewardGroup::new(self.prompt_id, self.rewards)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageRecord {
    pub prompt_id: String,
    pub estimator: String,
    pub tau: f64,
    pub advantages: Vec<f64>,
    pub center: f64,
    pub denominator: f64,
    pub degenerate: bool,
    pub skew_label: String,
}

impl AdvantageRecord {
    pub fn new(
        prompt_id: String,
        estimator: &str,
        tau: f64,
        adv: GroupAdvantages,
        label: SkewLabel,
    ) -> Self {
        Self {
            prompt_id,
            estimator: estimator.to_owned(),
            tau,
            advantages: adv.advantages,
            center: adv.center,
            denominator: adv.denominator,
            degenerate: adv.degenerate,
            skew_label: label.as_str().to_owned(),
        }
    }
}

/// One input pair for `reward`, compared character by character.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub predicted: String,
    pub truth: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub reward: f64,
}
