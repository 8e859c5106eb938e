use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::objective::SurrogateBatch;
use super::policy::{EditTask, TabularPolicy};
use super::rollout::{rollout_group, Rollout};
use crate::advantage::{compute_advantages, dynamic_sample_filter, Estimator, GroupAdvantages};
use crate::error::{GapoError, Result};
use crate::reward::composite_reward;

const TASK_STREAM: u64 = 0;

fn train_stream(prompt: usize) -> u64 {
    1 + 2 * prompt as u64
}

fn eval_stream(prompt: usize) -> u64 {
    2 + 2 * prompt as u64
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The sampling stream a [`Trainer`] uses for prompt `index`.
pub fn prompt_rng(seed: u64, index: usize) -> ChaCha8Rng {
    stream_rng(seed, train_stream(index))
}

/// Random targets for `config.prompts` tasks, derived from `config.seed`.
pub fn generate_tasks(config: &TrainConfig) -> Result<Vec<EditTask>> {
    let mut rng = stream_rng(config.seed, TASK_STREAM);
    (0..config.prompts)
        .map(|i| EditTask::random(format!("p{i:03}"), config.length, config.vocab, &mut rng))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    /// Mean observed (possibly corrupted) reward.
    pub mean_reward: f64,
    /// Mean reward before outlier injection.
    pub clean_mean_reward: f64,
    pub exact_match_rate: f64,
    pub pg_clipfrac: f64,
    pub kl_to_ref: f64,
    pub negative_advantage_fraction: f64,
    pub filtered_groups: usize,
    /// Every group was filtered out and no update happened.
    pub skipped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Fraction of tasks whose greedy decode equals the target.
    pub exact_match_rate: f64,
    /// Mean clean reward of sampled rollouts.
    pub mean_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub seed: u64,
    pub estimator: Estimator,
    pub tau: f64,
    pub steps: usize,
    pub initial_exact_match: f64,
    pub initial_mean_reward: f64,
    pub final_exact_match: f64,
    pub final_mean_reward: f64,
    /// Average over steps that performed an update.
    pub mean_pg_clipfrac: f64,
    pub skipped_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub metrics: Vec<StepMetrics>,
    pub initial: Evaluation,
    pub final_eval: Evaluation,
    pub summary: ExperimentSummary,
}

struct PromptUpdate {
    advantages: GroupAdvantages,
    clipped_terms: usize,
    total_terms: usize,
}

/// Clipped-surrogate ascent for one prompt against a fixed sampling snapshot.
fn update_prompt(
    policy: &mut TabularPolicy,
    reference: &TabularPolicy,
    rollout: &Rollout,
    config: &TrainConfig,
) -> Result<PromptUpdate> {
    let advantages = compute_advantages(&rollout.group, &config.advantage)?;
    let old = policy.clone();
    let batch = SurrogateBatch {
        old: &old,
        reference,
        sequences: &rollout.sequences,
        advantages: &advantages.advantages,
        epsilon: config.epsilon,
        beta: config.beta,
    };
    let mut clipped_terms = 0;
    let mut total_terms = 0;
    for _ in 0..config.inner_epochs {
        let out = batch.evaluate(policy);
        clipped_terms += out.clipped_terms;
        total_terms += out.total_terms;
        policy.ascend(&out.gradient, config.learning_rate);
    }
    Ok(PromptUpdate {
        advantages,
        clipped_terms,
        total_terms,
    })
}

/// One sampling + update round over every prompt.
///
/// Each prompt owns its policy table and its RNG stream, so prompts are
/// processed in parallel with results identical to a serial pass.
pub fn train_step(
    policies: &mut [TabularPolicy],
    references: &[TabularPolicy],
    tasks: &[EditTask],
    config: &TrainConfig,
    rngs: &mut [ChaCha8Rng],
    step: usize,
) -> Result<StepMetrics> {
    config.validate()?;
    let n = tasks.len();
    if policies.len() != n || references.len() != n || rngs.len() != n {
        return Err(GapoError::PolicyTaskMismatch(format!(
            "{n} tasks but {} policies, {} references, {} rng streams",
            policies.len(),
            references.len(),
            rngs.len()
        )));
    }

    let rollouts: Vec<Rollout> = policies
        .par_iter()
        .zip(rngs.par_iter_mut())
        .zip(tasks.par_iter())
        .map(|((policy, rng), task)| {
            rollout_group(policy, task, config.group_size, &config.outlier, rng)
        })
        .collect::<Result<_>>()?;

    let dropped: HashSet<String> = if config.dynamic_sampling {
        let groups = rollouts.iter().map(|r| r.group.clone()).collect();
        dynamic_sample_filter(groups).1.into_iter().collect()
    } else {
        HashSet::new()
    };

    let updates: Vec<Option<PromptUpdate>> = policies
        .par_iter_mut()
        .zip(references.par_iter())
        .zip(rollouts.par_iter())
        .map(|((policy, reference), rollout)| {
            if dropped.contains(&rollout.group.prompt_id) {
                return Ok(None);
            }
            update_prompt(policy, reference, rollout, config).map(Some)
        })
        .collect::<Result<_>>()?;

    let rollout_count = (n * config.group_size) as f64;
    let mut observed = 0.0;
    let mut clean = 0.0;
    let mut exact = 0;
    for (rollout, task) in rollouts.iter().zip(tasks) {
        observed += rollout.group.rewards.iter().sum::<f64>();
        clean += rollout.clean_rewards.iter().sum::<f64>();
        exact += rollout.exact_matches(task);
    }

    let (mut clipped, mut terms, mut negatives, mut scored) = (0, 0, 0, 0);
    for update in updates.iter().flatten() {
        clipped += update.clipped_terms;
        terms += update.total_terms;
        negatives += update.advantages.negative_count;
        scored += update.advantages.advantages.len();
    }
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let kl_to_ref = if n == 0 {
        0.0
    } else {
        policies
            .iter()
            .zip(references)
            .map(|(p, r)| p.mean_kl(r))
            .sum::<f64>()
            / n as f64
    };
    let filtered_groups = updates.iter().filter(|u| u.is_none()).count();

    Ok(StepMetrics {
        step,
        mean_reward: if n == 0 {
            0.0
        } else {
            observed / rollout_count
        },
        clean_mean_reward: if n == 0 { 0.0 } else { clean / rollout_count },
        exact_match_rate: ratio(exact, n * config.group_size),
        pg_clipfrac: ratio(clipped, terms),
        kl_to_ref,
        negative_advantage_fraction: ratio(negatives, scored),
        filtered_groups,
        skipped: filtered_groups == n,
    })
}

/// Holds the per-prompt policies, the frozen references and the RNG streams
/// for one run.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    tasks: Vec<EditTask>,
    policies: Vec<TabularPolicy>,
    references: Vec<TabularPolicy>,
    rngs: Vec<ChaCha8Rng>,
    steps_taken: usize,
}

impl Trainer {
    /// Starts every prompt from the uniform policy, which is also the reference.
    pub fn new(config: TrainConfig, tasks: Vec<EditTask>) -> Result<Self> {
        let policies = tasks
            .iter()
            .map(|t| TabularPolicy::uniform(t.len(), t.vocab))
            .collect::<Result<Vec<_>>>()?;
        Self::with_policies(config, tasks, policies)
    }

    pub fn with_policies(
        config: TrainConfig,
        tasks: Vec<EditTask>,
        policies: Vec<TabularPolicy>,
    ) -> Result<Self> {
        config.validate()?;
        if policies.len() != tasks.len() {
            return Err(GapoError::PolicyTaskMismatch(format!(
                "{} tasks but {} policies",
                tasks.len(),
                policies.len()
            )));
        }
        for (p, t) in policies.iter().zip(&tasks) {
            p.check_task(t)?;
        }
        let rngs = (0..tasks.len())
            .map(|i| prompt_rng(config.seed, i))
            .collect();
        Ok(Self {
            references: policies.clone(),
            policies,
            tasks,
            rngs,
            config,
            steps_taken: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn tasks(&self) -> &[EditTask] {
        &self.tasks
    }

    pub fn policies(&self) -> &[TabularPolicy] {
        &self.policies
    }

    pub fn step(&mut self) -> Result<StepMetrics> {
        let metrics = train_step(
            &mut self.policies,
            &self.references,
            &self.tasks,
            &self.config,
            &mut self.rngs,
            self.steps_taken,
        )?;
        self.steps_taken += 1;
        Ok(metrics)
    }

    /// Greedy exact match plus the mean clean reward of `eval_samples`
    /// rollouts per task. Each call replays the same evaluation streams.
    pub fn evaluate(&self) -> Evaluation {
        let n = self.tasks.len();
        if n == 0 {
            return Evaluation {
                exact_match_rate: 0.0,
                mean_reward: 0.0,
            };
        }
        let samples = self.config.eval_samples;
        let per_task: Vec<(bool, f64)> = self
            .policies
            .par_iter()
            .zip(self.tasks.par_iter())
            .enumerate()
            .map(|(i, (policy, task))| {
                let exact = policy.greedy() == task.target;
                let mut rng = stream_rng(self.config.seed, eval_stream(i));
                let total: f64 = (0..samples)
                    .map(|_| composite_reward(&policy.sample(&mut rng), &task.target).get())
                    .sum();
                (exact, total)
            })
            .collect();
        let exact = per_task.iter().filter(|(e, _)| *e).count();
        let reward: f64 = per_task.iter().map(|(_, r)| r).sum();
        Evaluation {
            exact_match_rate: exact as f64 / n as f64,
            mean_reward: if samples == 0 {
                0.0
            } else {
                reward / (n * samples) as f64
            },
        }
    }
}

/// Trains on tasks generated from `config.seed`.
pub fn run_experiment(config: &TrainConfig) -> Result<Experiment> {
    run_experiment_on(config, generate_tasks(config)?)
}

/// Trains for `config.steps` steps and evaluates on the same tasks before and
/// after. Deterministic in `(config, tasks)`.
pub fn run_experiment_on(config: &TrainConfig, tasks: Vec<EditTask>) -> Result<Experiment> {
    let mut trainer = Trainer::new(config.clone(), tasks)?;
    let initial = trainer.evaluate();
    let metrics = (0..config.steps)
        .map(|_| trainer.step())
        .collect::<Result<Vec<_>>>()?;
    let final_eval = trainer.evaluate();

    let updated: Vec<f64> = metrics
        .iter()
        .filter(|m| !m.skipped)
        .map(|m| m.pg_clipfrac)
        .collect();
    let summary = ExperimentSummary {
        seed: config.seed,
        estimator: config.advantage.estimator,
        tau: config.advantage.tau,
        steps: config.steps,
        initial_exact_match: initial.exact_match_rate,
        initial_mean_reward: initial.mean_reward,
        final_exact_match: final_eval.exact_match_rate,
        final_mean_reward: final_eval.mean_reward,
        mean_pg_clipfrac: if updated.is_empty() {
            0.0
        } else {
            updated.iter().sum::<f64>() / updated.len() as f64
        },
        skipped_steps: metrics.len() - updated.len(),
    };
    Ok(Experiment {
        metrics,
        initial,
        final_eval,
        summary,
    })
}
