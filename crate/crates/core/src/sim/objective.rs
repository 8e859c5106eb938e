//! Clipped surrogate with a KL penalty, and its analytic gradient for a
//! tabular softmax policy.
//!
//! For one prompt with rollouts `e_1..e_G` of length `L`:
//!
//! ```text
//! J = 1/G sum_i 1/L sum_t [ min(k_it A_i, clip(k_it, 1-eps, 1+eps) A_i) - beta KL_t(pi || pi_ref) ]
//! k_it = pi(e_it | t) / pi_old(e_it | t)
//! ```
//!
//! The rollout advantage `A_i` is shared by all of its tokens, and `KL_t` is
//! the exact categorical divergence at position `t`.

use super::policy::TabularPolicy;

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateOutput {
    pub objective: f64,
    /// dJ/dlogits, row-major like [`TabularPolicy::logits`].
    pub gradient: Vec<f64>,
    /// Token terms whose clipped branch is the active minimum.
    pub clipped_terms: usize,
    pub total_terms: usize,
}

impl SurrogateOutput {
    pub fn clip_fraction(&self) -> f64 {
        if self.total_terms == 0 {
            0.0
        } else {
            self.clipped_terms as f64 / self.total_terms as f64
        }
    }
}

/// Everything the surrogate needs besides the policy being optimized.
///
/// `old` is the sampling policy and `reference` the KL anchor. Both must
/// share the optimized policy's shape, and every sequence must have its length.
#[derive(Debug, Clone, Copy)]
pub struct SurrogateBatch<'a> {
    pub old: &'a TabularPolicy,
    pub reference: &'a TabularPolicy,
    pub sequences: &'a [Vec<usize>],
    pub advantages: &'a [f64],
    pub epsilon: f64,
    pub beta: f64,
}

impl SurrogateBatch<'_> {
    /// Evaluates the surrogate and its gradient with respect to `policy`'s logits.
    pub fn evaluate(&self, policy: &TabularPolicy) -> SurrogateOutput {
        surrogate(policy, self)
    }

    /// Central finite differences of the objective, for checking
    /// [`evaluate`](Self::evaluate)'s gradient.
    pub fn finite_difference_gradient(&self, policy: &TabularPolicy, h: f64) -> Vec<f64> {
        let mut probe = policy.clone();
        (0..policy.logits().len())
            .map(|k| {
                let base = policy.logits()[k];
                probe.logits_mut()[k] = base + h;
                let up = self.evaluate(&probe).objective;
                probe.logits_mut()[k] = base - h;
                let down = self.evaluate(&probe).objective;
                probe.logits_mut()[k] = base;
                (up - down) / (2.0 * h)
            })
            .collect()
    }
}

fn surrogate(policy: &TabularPolicy, batch: &SurrogateBatch<'_>) -> SurrogateOutput {
    let SurrogateBatch {
        old,
        reference,
        sequences,
        advantages,
        epsilon,
        beta,
    } = *batch;
    debug_assert_eq!(sequences.len(), advantages.len());
    let length = policy.length();
    let vocab = policy.vocab();
    let g = sequences.len().max(1) as f64;
    let token_weight = 1.0 / (g * length as f64);

    let log_p: Vec<Vec<f64>> = (0..length).map(|t| policy.log_probs(t)).collect();
    let log_old: Vec<Vec<f64>> = (0..length).map(|t| old.log_probs(t)).collect();
    let p: Vec<Vec<f64>> = log_p
        .iter()
        .map(|row| row.iter().map(|&l| libm::exp(l)).collect())
        .collect();

    let mut objective = 0.0;
    let mut gradient = vec![0.0; length * vocab];
    let mut clipped_terms = 0;

    for (seq, &adv) in sequences.iter().zip(advantages) {
        for (t, &token) in seq.iter().enumerate() {
            let ratio = libm::exp(log_p[t][token] - log_old[t][token]);
            let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
            let unclipped_term = ratio * adv;
            let clipped_term = clipped * adv;
            if clipped_term < unclipped_term {
                clipped_terms += 1;
                objective += token_weight * clipped_term;
                continue;
            }
            objective += token_weight * unclipped_term;
            if adv == 0.0 {
                continue;
            }
            // d ratio / d z_u = ratio * (1[u = token] - p_u)
            let w = token_weight * adv * ratio;
            let row = &mut gradient[t * vocab..(t + 1) * vocab];
            for (u, gu) in row.iter_mut().enumerate() {
                let indicator = if u == token { 1.0 } else { 0.0 };
                *gu += w * (indicator - p[t][u]);
            }
        }
    }

    if beta != 0.0 {
        let kl_weight = beta / length as f64;
        for t in 0..length {
            let log_ref = reference.log_probs(t);
            let kl: f64 = (0..vocab)
                .map(|u| p[t][u] * (log_p[t][u] - log_ref[u]))
                .sum();
            objective -= kl_weight * kl;
            // d KL / d z_u = p_u (log p_u - log ref_u - KL)
            let row = &mut gradient[t * vocab..(t + 1) * vocab];
            for (u, gu) in row.iter_mut().enumerate() {
                *gu -= kl_weight * p[t][u] * (log_p[t][u] - log_ref[u] - kl);
            }
        }
    }

    SurrogateOutput {
        objective,
        gradient,
        clipped_terms,
        total_terms: sequences.len() * length,
    }
}

/// Largest componentwise difference relative to the larger of the two
/// vectors' max-norms. Zero when both vectors are zero.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0_f64, |m, x| m.max(x.abs()));
    let diff = analytic
        .iter()
        .zip(numeric)
        .fold(0.0_f64, |m, (a, n)| m.max((a - n).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
