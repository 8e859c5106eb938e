use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GapoError, Result};

/// A prompt whose ground-truth edit is a fixed token sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditTask {
    pub prompt_id: String,
    pub target: Vec<usize>,
    pub vocab: usize,
}

impl EditTask {
    pub fn new(prompt_id: impl Into<String>, target: Vec<usize>, vocab: usize) -> Result<Self> {
        let task = Self {
            prompt_id: prompt_id.into(),
            target,
            vocab,
        };
        if task.target.is_empty() || task.vocab < 2 {
            return Err(GapoError::InvalidConfig(format!(
                "task `{}` needs length >= 1 and vocab >= 2",
                task.prompt_id
            )));
        }
        if let Some(&bad) = task.target.iter().find(|&&s| s >= task.vocab) {
            return Err(GapoError::InvalidConfig(format!(
                "task `{}` has symbol {bad} outside vocab {}",
                task.prompt_id, task.vocab
            )));
        }
        Ok(task)
    }

    pub fn random<R: Rng + ?Sized>(
        prompt_id: impl Into<String>,
        length: usize,
        vocab: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let target = (0..length)
            .map(|_| rng.random_range(0..vocab.max(1)))
            .collect();
        Self::new(prompt_id, target, vocab)
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }
}

/// Position-wise categorical policy: one row of logits per output position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    length: usize,
    vocab: usize,
    logits: Vec<f64>,
    version: u64,
}

impl TabularPolicy {
    pub fn uniform(length: usize, vocab: usize) -> Result<Self> {
        Self::from_logits(length, vocab, vec![0.0; length * vocab])
    }

    pub fn from_logits(length: usize, vocab: usize, logits: Vec<f64>) -> Result<Self> {
        if length == 0 || vocab < 2 {
            return Err(GapoError::InvalidConfig(
                "policy needs length >= 1 and vocab >= 2".into(),
            ));
        }
        if logits.len() != length * vocab || logits.iter().any(|l| !l.is_finite()) {
            return Err(GapoError::InvalidConfig(format!(
                "expected {} finite logits",
                length * vocab
            )));
        }
        Ok(Self {
            length,
            vocab,
            logits,
            version: 0,
        })
    }

    /// Puts `sharpness` extra logit mass on each target symbol.
    pub fn peaked(target: &[usize], vocab: usize, sharpness: f64) -> Result<Self> {
        let mut logits = vec![0.0; target.len() * vocab];
        for (t, &s) in target.iter().enumerate() {
            if s >= vocab {
                return Err(GapoError::InvalidConfig(format!(
                    "symbol {s} outside vocab {vocab}"
                )));
            }
            logits[t * vocab + s] = sharpness;
        }
        Self::from_logits(target.len(), vocab, logits)
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn row(&self, position: usize) -> &[f64] {
        &self.logits[position * self.vocab..(position + 1) * self.vocab]
    }

    pub fn check_task(&self, task: &EditTask) -> Result<()> {
        if task.len() != self.length || task.vocab != self.vocab {
            return Err(GapoError::PolicyTaskMismatch(format!(
                "policy is {}x{}, task `{}` is {}x{}",
                self.length,
                self.vocab,
                task.prompt_id,
                task.len(),
                task.vocab
            )));
        }
        Ok(())
    }

    /// Log-softmax of one position.
    pub fn log_probs(&self, position: usize) -> Vec<f64> {
        log_softmax(self.row(position))
    }

    pub fn probs(&self, position: usize) -> Vec<f64> {
        self.log_probs(position)
            .into_iter()
            .map(libm::exp)
            .collect()
    }

    /// Per-position probability rows.
    pub fn probability_table(&self) -> Vec<Vec<f64>> {
        (0..self.length).map(|t| self.probs(t)).collect()
    }

    /// Samples each position independently by inverse CDF.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        sample_from(&self.probability_table(), rng)
    }

    /// Most likely symbol per position; ties go to the lowest symbol.
    pub fn greedy(&self) -> Vec<usize> {
        (0..self.length)
            .map(|t| {
                let row = self.row(t);
                let mut best = 0;
                for v in 1..self.vocab {
                    if row[v] > row[best] {
                        best = v;
                    }
                }
                best
            })
            .collect()
    }

    /// Exact `KL(self || other)` at one position.
    pub fn kl_at(&self, other: &TabularPolicy, position: usize) -> f64 {
        let lp = self.log_probs(position);
        let lq = other.log_probs(position);
        lp.iter()
            .zip(&lq)
            .map(|(a, b)| libm::exp(*a) * (a - b))
            .sum()
    }

    /// Mean over positions of the exact per-position KL.
    pub fn mean_kl(&self, other: &TabularPolicy) -> f64 {
        (0..self.length).map(|t| self.kl_at(other, t)).sum::<f64>() / self.length as f64
    }

    /// `logits += step * gradient`; zero components leave the logit untouched.
    pub fn ascend(&mut self, gradient: &[f64], step: f64) {
        debug_assert_eq!(gradient.len(), self.logits.len());
        for (l, g) in self.logits.iter_mut().zip(gradient) {
            if *g != 0.0 {
                *l += step * g;
            }
        }
        self.version += 1;
    }

    pub(crate) fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }
}

pub(crate) fn sample_from<R: Rng + ?Sized>(table: &[Vec<f64>], rng: &mut R) -> Vec<usize> {
    table
        .iter()
        .map(|probs| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (v, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return v;
                }
            }
            probs.len() - 1
        })
        .collect()
}

pub(crate) fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = row.iter().map(|l| libm::exp(l - max)).sum();
    let log_z = max + libm::log(sum);
    row.iter().map(|l| l - log_z).collect()
}
