//! Seed-averaged final reward and clip fraction per estimator for a list of
//! learning rates, under low-tail outliers at probability 0.15.
//!
//! `cargo run --release -p gapo-core --example lr_sweep -- 1 2 4 8 16 32`

use gapo_core::sim::{run_experiment, OutlierMode, OutlierSpec, TrainConfig};
use gapo_core::Estimator;
use rayon::prelude::*;

const SEEDS: u64 = 10;

fn main() {
    let rates: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("learning rates must be numbers"))
        .collect();
    let rates = if rates.is_empty() { vec![8.0] } else { rates };

    for lr in rates {
        let runs: Vec<Vec<(f64, f64)>> = Estimator::ALL
            .par_iter()
            .map(|&estimator| {
                (0..SEEDS)
                    .into_par_iter()
                    .map(|seed| {
                        let mut config = TrainConfig {
                            learning_rate: lr,
                            seed,
                            outlier: OutlierSpec {
                                probability: 0.15,
                                mode: OutlierMode::LowTail,
                            },
                            ..TrainConfig::default()
                        };
                        config.advantage.estimator = estimator;
                        let s = run_experiment(&config).expect("valid config").summary;
                        (s.final_mean_reward, s.mean_pg_clipfrac)
                    })
                    .collect()
            })
            .collect();

        println!("learning_rate = {lr}");
        for (estimator, r) in Estimator::ALL.iter().zip(&runs) {
            let reward = r.iter().map(|x| x.0).sum::<f64>() / SEEDS as f64;
            let clip = r.iter().map(|x| x.1).sum::<f64>() / SEEDS as f64;
            println!(
                "  {:<16} reward {reward:.4}  clipfrac {clip:.4}",
                estimator.as_str()
            );
        }
        let grpo = &runs[Estimator::ALL
            .iter()
            .position(|e| *e == Estimator::Grpo)
            .unwrap()];
        let gapo = &runs[Estimator::ALL
            .iter()
            .position(|e| *e == Estimator::GapoMedianDiv)
            .unwrap()];
        let wins = grpo.iter().zip(gapo).filter(|(b, g)| g.0 >= b.0).count();
        println!("  gapo-median-div >= grpo in {wins}/{SEEDS} seeds");
    }
}
