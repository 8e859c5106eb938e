//! Group-relative advantage estimation for RL post-training.
//!
//! GRPO centers each rollout's reward on the group mean. GAPO instead finds
//! the highest-density interval of the group's rewards and centers on its
//! median, which keeps a handful of outlier rollouts from dragging the center
//! around. This crate provides both estimators and two ablations, the
//! composite edit reward, reward-shape diagnostics and a small simulator for
//! comparing estimators under injected reward outliers.

pub mod advantage;
pub mod analysis;
mod error;
pub mod hdi;
pub mod reward;
pub mod sim;

pub use advantage::{
    advantages_for, compute_advantages, dynamic_sample_filter, gapo_advantage, grpo_advantage,
    AdvantageConfig, Estimator, GroupAdvantages, RewardGroup,
};
pub use analysis::{
    batch_report, classify_group, AnalysisConfig, BatchReport, GroupDiagnostics, SkewLabel,
};
pub use error::{GapoError, Result};
pub use hdi::{adaptive_q, find_hdi, HdiConfig, HdiResult};
pub use reward::{composite_reward, edit_distance, text_reward, EditPair, RewardValue};
