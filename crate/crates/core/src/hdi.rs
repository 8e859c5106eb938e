//! Highest-density interval over a group of rewards.
//!
//! The shortest interval holding at least `k = ceil(G * tau)` of the `G`
//! rewards is always a block of exactly `k` consecutive order statistics, so a
//! single sliding-window pass over the sorted copy finds it. Sorting dominates
//! at `O(G log G)`; the scan is linear.

use serde::{Deserialize, Serialize};

use crate::error::{GapoError, Result};

pub const DEFAULT_TAU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HdiConfig {
    /// Fraction of the group the interval must cover.
    pub tau: f64,
}

impl HdiConfig {
    pub fn new(tau: f64) -> Result<Self> {
        let config = Self { tau };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(GapoError::InvalidConfig(format!(
                "tau must be in [0, 1], got {}",
                self.tau
            )));
        }
        Ok(())
    }

    /// Window size `max(1, ceil(G * tau))`, capped at `G`.
    ///
    /// `G * tau` is rounded to the nearest integer first when it lies within a
    /// few ulps of one, so that e.g. `tau = 0.55, G = 100` gives 55 rather than
    /// the 56 a raw `ceil(55.00000000000001)` would produce.
    pub fn window_size(&self, group_size: usize) -> usize {
        let exact = group_size as f64 * self.tau;
        let nearest = exact.round();
        let covered = if (exact - nearest).abs() <= 4.0 * f64::EPSILON * nearest.max(1.0) {
            nearest
        } else {
            exact.ceil()
        };
        (covered as usize).clamp(1, group_size.max(1))
    }
}

impl Default for HdiConfig {
    fn default() -> Self {
        Self { tau: DEFAULT_TAU }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdiResult {
    /// First index of the window in sorted order.
    pub start_index: usize,
    /// Last index of the window in sorted order (inclusive).
    pub end_index: usize,
    /// The sorted rewards inside the window.
    pub values: Vec<f64>,
    /// `values[last] - values[0]`.
    pub length: f64,
    /// Median of `values`.
    pub q: f64,
    /// Number of candidate windows whose length was evaluated (`G - k + 1`).
    pub windows_scanned: usize,
}

impl HdiResult {
    pub fn window_size(&self) -> usize {
        self.values.len()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

pub(crate) fn check_rewards(rewards: &[f64]) -> Result<()> {
    if rewards.is_empty() {
        return Err(GapoError::EmptyGroup);
    }
    if let Some((index, &value)) = rewards.iter().enumerate().find(|(_, r)| !r.is_finite()) {
        return Err(GapoError::InvalidReward { index, value });
    }
    Ok(())
}

/// Median of an already sorted, non-empty slice. Even lengths average the
/// two middle values.
pub fn sorted_median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    sorted_median(&sorted)
}

/// Finds the shortest window of `k` sorted rewards. Ties keep the earliest
/// window. The caller's slice is left untouched.
pub fn find_hdi(rewards: &[f64], config: HdiConfig) -> Result<HdiResult> {
    config.validate()?;
    check_rewards(rewards)?;

    let mut sorted = rewards.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);

    let k = config.window_size(sorted.len());
    let mut best_start = 0;
    let mut min_length = f64::INFINITY;
    let mut windows_scanned = 0;
    for (start, window) in sorted.windows(k).enumerate() {
        windows_scanned += 1;
        let length = window[k - 1] - window[0];
        if length < min_length {
            min_length = length;
            best_start = start;
        }
    }

    let values = sorted[best_start..best_start + k].to_vec();
    let q = sorted_median(&values);
    Ok(HdiResult {
        start_index: best_start,
        end_index: best_start + k - 1,
        values,
        length: min_length,
        q,
        windows_scanned,
    })
}

/// The adaptive center: median of the highest-density window.
pub fn adaptive_q(rewards: &[f64], config: HdiConfig) -> Result<f64> {
    find_hdi(rewards, config).map(|h| h.q)
}
