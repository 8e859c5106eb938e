//! Desk-scale policy-gradient simulator.
//!
//! Each prompt is a fixed target token sequence and owns a position-wise
//! softmax table. Rollouts are scored with the composite edit reward,
//! optionally corrupted by injected outliers, turned into group-relative
//! advantages by the configured estimator, and used for clipped-surrogate
//! ascent with an exact KL penalty toward the initial table.

mod config;
mod objective;
mod policy;
mod rollout;
mod train;

pub use config::TrainConfig;
pub use objective::{max_relative_error, SurrogateBatch, SurrogateOutput};
pub use policy::{EditTask, TabularPolicy};
pub use rollout::{rollout_group, skewed_group, OutlierMode, OutlierSpec, Rollout};
pub use train::{
    generate_tasks, prompt_rng, run_experiment, run_experiment_on, train_step, Evaluation,
    Experiment, ExperimentSummary, StepMetrics, Trainer,
};
