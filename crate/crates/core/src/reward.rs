//! Composite exact-match + normalized edit-distance reward.
//!
//! ```text
//! r(pred, truth) = 1/2 * ( [pred == truth] + 1 - ed(pred, truth) / max(|pred|, |truth|) )
//! ```
//!
//! Sequences are compared symbol by symbol; callers decide the granularity
//! (characters, tokens, lines). No whitespace or line-ending normalization is
//! applied.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A reward in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RewardValue(f64);

impl RewardValue {
    /// Returns `None` when `value` is not a finite number in `[0, 1]`.
    pub fn new(value: f64) -> Option<Self> {
        (value.is_finite() && (0.0..=1.0).contains(&value)).then_some(Self(value))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl From<RewardValue> for f64 {
    fn from(r: RewardValue) -> f64 {
        r.0
    }
}

impl fmt::Display for RewardValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A predicted edit and its ground truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditPair<T> {
    pub predicted: Vec<T>,
    pub truth: Vec<T>,
}

impl<T: PartialEq> EditPair<T> {
    pub fn new(predicted: Vec<T>, truth: Vec<T>) -> Self {
        Self { predicted, truth }
    }

    pub fn reward(&self) -> RewardValue {
        composite_reward(&self.predicted, &self.truth)
    }
}

impl EditPair<char> {
    /// Character-level pair (Unicode scalar values).
    pub fn from_text(predicted: &str, truth: &str) -> Self {
        Self::new(predicted.chars().collect(), truth.chars().collect())
    }
}

/// Levenshtein distance with unit insert/delete/substitute costs.
///
/// Uses a single rolling row sized to the shorter input.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return long.len();
    }

    let mut row: Vec<usize> = (0..=short.len()).collect();
    for (i, x) in long.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in short.iter().enumerate() {
            let above = row[j + 1];
            let substitute = diag + usize::from(x != y);
            row[j + 1] = substitute.min(above + 1).min(row[j] + 1);
            diag = above;
        }
    }
    row[short.len()]
}

/// Scores `predicted` against `truth`.
///
/// Two empty sequences score 1.0: they match exactly and there is nothing to
/// edit.
pub fn composite_reward<T: PartialEq>(predicted: &[T], truth: &[T]) -> RewardValue {
    let max_len = predicted.len().max(truth.len());
    if max_len == 0 {
        return RewardValue(1.0);
    }
    let exact = if predicted == truth { 1.0 } else { 0.0 };
    let ed = edit_distance(predicted, truth) as f64;
    let similarity = 1.0 - ed / max_len as f64;
    RewardValue(0.5 * (exact + similarity))
}

/// Character-level [`composite_reward`] for text payloads.
pub fn text_reward(predicted: &str, truth: &str) -> RewardValue {
    EditPair::from_text(predicted, truth).reward()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exponential recursion over suffixes; no memo, no table.
    fn naive_distance(a: &[u8], b: &[u8]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((x, ra)), Some((y, rb))) => {
                let sub = naive_distance(ra, rb) + usize::from(x != y);
                let del = naive_distance(ra, b) + 1;
                let ins = naive_distance(a, rb) + 1;
                sub.min(del).min(ins)
            }
        }
    }

    #[test]
    fn distance_examples() {
        assert_eq!(edit_distance(b"abc", b"abc"), 0);
        assert_eq!(edit_distance(b"", b"abc"), 3);
        assert_eq!(edit_distance(b"abc", b""), 3);
        assert_eq!(edit_distance(b"kitten", b"sitting"), 3);
        assert_eq!(naive_distance(b"kitten", b"sitting"), 3);
    }

    #[test]
    fn reward_examples() {
        assert_eq!(text_reward("abc", "abc").get(), 1.0);
        assert_eq!(text_reward("", "abc").get(), 0.0);
        assert!((text_reward("kitten", "sitting").get() - 2.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn both_empty_is_exact_match() {
        assert_eq!(text_reward("", "").get(), 1.0);
    }

    #[test]
    fn total_mismatch_scores_zero() {
        // ed == max length and the sequences differ
        assert_eq!(text_reward("abc", "xyz").get(), 0.0);
        assert_eq!(text_reward("ab", "xyz").get(), 0.0);
    }

    #[test]
    fn multibyte_text_is_scored_per_char() {
        assert_eq!(text_reward("héllo", "hello").get(), 0.5 * (1.0 - 1.0 / 5.0));
    }

    #[test]
    fn reward_value_rejects_out_of_range() {
        assert!(RewardValue::new(1.5).is_none());
        assert!(RewardValue::new(f64::NAN).is_none());
        assert_eq!(RewardValue::new(0.25).map(f64::from), Some(0.25));
    }

    fn seq() -> impl Strategy<Value = Vec<u8>> {
        prop::collection::vec(0u8..4, 0..12)
    }

    proptest! {
        #[test]
        fn distance_is_symmetric(a in seq(), b in seq()) {
            prop_assert_eq!(edit_distance(&a, &b), edit_distance(&b, &a));
        }

        #[test]
        fn distance_triangle(a in seq(), b in seq(), c in seq()) {
            prop_assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
        }

        #[test]
        fn distance_zero_iff_equal(a in seq(), b in seq()) {
            prop_assert_eq!(edit_distance(&a, &b) == 0, a == b);
        }

        #[test]
        fn reward_in_unit_interval(a in seq(), b in seq()) {
            let r = composite_reward(&a, &b).get();
            prop_assert!((0.0..=1.0).contains(&r));
            if a != b {
                prop_assert!(r < 0.5);
            }
        }

        #[test]
        fn reward_identity(a in prop::collection::vec(0u8..4, 1..12)) {
            prop_assert_eq!(composite_reward(&a, &a).get(), 1.0);
        }
    }
}
