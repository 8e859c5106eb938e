//! Reward-distribution shape per group and per batch.
//!
//! Groups are labelled from the adjusted Fisher-Pearson sample skewness
//! `G1 = sqrt(n (n - 1)) / (n - 2) * m3 / m2^(3/2)`: below `-threshold` is left
//! skewed (long low tail), above `+threshold` is right skewed, and anything
//! else counts as approximately normal. Constant groups are `degenerate`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::advantage::{is_constant, RewardGroup};
use crate::error::{GapoError, Result};
use crate::hdi::{self, HdiConfig};

pub const DEFAULT_SKEW_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkewLabel {
    LeftSkewed,
    RightSkewed,
    ApproxNormal,
    Degenerate,
}

impl SkewLabel {
    pub const ALL: [SkewLabel; 4] = [
        SkewLabel::LeftSkewed,
        SkewLabel::RightSkewed,
        SkewLabel::ApproxNormal,
        SkewLabel::Degenerate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SkewLabel::LeftSkewed => "left_skewed",
            SkewLabel::RightSkewed => "right_skewed",
            SkewLabel::ApproxNormal => "approx_normal",
            SkewLabel::Degenerate => "degenerate",
        }
    }

    /// The label of the reflected group `1 - r`.
    pub fn reflected(self) -> Self {
        match self {
            SkewLabel::LeftSkewed => SkewLabel::RightSkewed,
            SkewLabel::RightSkewed => SkewLabel::LeftSkewed,
            other => other,
        }
    }
}

impl fmt::Display for SkewLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Coverage used for the adaptive Q reported alongside each group.
    pub tau: f64,
    /// `|G1|` at or below this counts as approximately normal.
    pub skew_threshold: f64,
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        HdiConfig { tau: self.tau }.validate()?;
        if !(self.skew_threshold >= 0.0 && self.skew_threshold.is_finite()) {
            return Err(GapoError::InvalidConfig(format!(
                "skew threshold must be non-negative, got {}",
                self.skew_threshold
            )));
        }
        Ok(())
    }
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            tau: hdi::DEFAULT_TAU,
            skew_threshold: DEFAULT_SKEW_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDiagnostics {
    pub prompt_id: String,
    pub mean: f64,
    pub median: f64,
    pub q: f64,
    /// `None` when fewer than three rewards or the group is constant.
    pub sample_skewness: Option<f64>,
    pub label: SkewLabel,
    pub mean_median_gap: f64,
    /// Set for groups too small for a skewness estimate.
    pub low_confidence: bool,
}

/// Adjusted Fisher-Pearson skewness. `None` for `n < 3` or zero variance.
pub fn sample_skewness(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let (m2, m3) = values.iter().fold((0.0, 0.0), |(m2, m3), x| {
        let d = x - mean;
        (m2 + d * d, m3 + d * d * d)
    });
    let (m2, m3) = (m2 / nf, m3 / nf);
    if m2 <= 0.0 {
        return None;
    }
    let g1 = m3 / (m2 * m2.sqrt());
    Some((nf * (nf - 1.0)).sqrt() / (nf - 2.0) * g1)
}

pub fn classify_rewards(
    prompt_id: &str,
    rewards: &[f64],
    config: &AnalysisConfig,
) -> Result<GroupDiagnostics> {
    config.validate()?;
    let q = hdi::adaptive_q(rewards, HdiConfig { tau: config.tau })?;
    let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
    let median = hdi::median(rewards);
    let degenerate = is_constant(rewards);
    let low_confidence = rewards.len() < 3;

    let sample_skewness = if degenerate {
        None
    } else {
        sample_skewness(rewards)
    };
    let label = match sample_skewness {
        _ if degenerate => SkewLabel::Degenerate,
        Some(g1) if g1 < -config.skew_threshold => SkewLabel::LeftSkewed,
        Some(g1) if g1 > config.skew_threshold => SkewLabel::RightSkewed,
        _ => SkewLabel::ApproxNormal,
    };

    Ok(GroupDiagnostics {
        prompt_id: prompt_id.to_owned(),
        mean,
        median,
        q,
        sample_skewness,
        label,
        mean_median_gap: mean - median,
        low_confidence,
    })
}

pub fn classify_group(group: &RewardGroup, config: &AnalysisConfig) -> Result<GroupDiagnostics> {
    classify_rewards(&group.prompt_id, &group.rewards, config)
}

/// Per-label tallies, serialized with one key per label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelTally<T> {
    pub left_skewed: T,
    pub right_skewed: T,
    pub approx_normal: T,
    pub degenerate: T,
}

impl<T: Copy> LabelTally<T> {
    pub fn get(&self, label: SkewLabel) -> T {
        match label {
            SkewLabel::LeftSkewed => self.left_skewed,
            SkewLabel::RightSkewed => self.right_skewed,
            SkewLabel::ApproxNormal => self.approx_normal,
            SkewLabel::Degenerate => self.degenerate,
        }
    }

    fn get_mut(&mut self, label: SkewLabel) -> &mut T {
        match label {
            SkewLabel::LeftSkewed => &mut self.left_skewed,
            SkewLabel::RightSkewed => &mut self.right_skewed,
            SkewLabel::ApproxNormal => &mut self.approx_normal,
            SkewLabel::Degenerate => &mut self.degenerate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub groups: usize,
    /// True for an empty batch; fractions are then all zero.
    pub empty: bool,
    pub counts: LabelTally<usize>,
    pub fractions: LabelTally<f64>,
    pub diagnostics: Vec<GroupDiagnostics>,
}

pub fn batch_report(groups: &[RewardGroup], config: &AnalysisConfig) -> Result<BatchReport> {
    let diagnostics = groups
        .iter()
        .map(|g| classify_group(g, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(report_from_diagnostics(diagnostics))
}

pub fn report_from_diagnostics(diagnostics: Vec<GroupDiagnostics>) -> BatchReport {
    let mut counts = LabelTally::<usize>::default();
    for d in &diagnostics {
        *counts.get_mut(d.label) += 1;
    }
    let n = diagnostics.len();
    let mut fractions = LabelTally::<f64>::default();
    if n > 0 {
        for label in SkewLabel::ALL {
            *fractions.get_mut(label) = counts.get(label) as f64 / n as f64;
        }
    }
    BatchReport {
        groups: n,
        empty: n == 0,
        counts,
        fractions,
        diagnostics,
    }
}
