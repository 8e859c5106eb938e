//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use gapo_core::sim::{
    generate_tasks, max_relative_error, prompt_rng, run_experiment, train_step, OutlierMode,
    OutlierSpec, SurrogateBatch, TabularPolicy, TrainConfig,
};
use gapo_core::{
    adaptive_q, advantages_for, compute_advantages, dynamic_sample_filter, edit_distance, find_hdi,
    text_reward, AdvantageConfig, Estimator, HdiConfig, RewardGroup,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Uniform, clustered-with-outliers or discretised reward groups. Only the
/// first two shapes are drawn when `allow_ties` is false.
fn random_group(rng: &mut ChaCha8Rng, size: usize, allow_ties: bool) -> Vec<f64> {
    let shapes = if allow_ties { 3 } else { 2 };
    match rng.random_range(0..shapes) {
        0 => (0..size).map(|_| rng.random::<f64>()).collect(),
        1 => {
            let clusters: Vec<(f64, f64)> = (0..rng.random_range(1..=3))
                .map(|_| (rng.random_range(0.05..0.95), rng.random_range(0.005..0.08)))
                .collect();
            (0..size)
                .map(|_| {
                    if rng.random_bool(0.15) {
                        rng.random::<f64>()
                    } else {
                        let (c, w) = clusters[rng.random_range(0..clusters.len())];
                        (c + rng.random_range(-w..w)).clamp(0.0, 1.0)
                    }
                })
                .collect()
        }
        _ => {
            let levels = rng.random_range(2..=10) as f64;
            (0..size)
                .map(|_| (rng.random::<f64>() * levels).floor() / levels)
                .collect()
        }
    }
}

/// Groups with a dense cluster and a tail on one side, for sign checks.
fn skewed_mixture(rng: &mut ChaCha8Rng, size: usize) -> Vec<f64> {
    let high = rng.random_bool(0.5);
    let center: f64 = if high {
        rng.random_range(0.6..0.95)
    } else {
        rng.random_range(0.05..0.4)
    };
    let width = rng.random_range(0.01..0.1);
    (0..size)
        .map(|_| {
            if rng.random_bool(0.2) {
                rng.random::<f64>()
            } else {
                (center + rng.random_range(-width..width)).clamp(0.0, 1.0)
            }
        })
        .collect()
}

fn exhaustive_min_window(rewards: &[f64], k: usize) -> f64 {
    let mut sorted = rewards.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best = f64::INFINITY;
    for i in 0..sorted.len() {
        for j in (i + k - 1)..sorted.len() {
            best = best.min(sorted[j] - sorted[i]);
        }
    }
    best
}

fn c1_hdi_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let groups: Vec<(Vec<f64>, f64)> = (0..1200)
        .map(|i| {
            let size = if i < 8 {
                [2, 3, 4, 5, 511, 512, 512, 257][i]
            } else {
                rng.random_range(2..=512)
            };
            let tau = if rng.random_bool(0.1) {
                1.0
            } else {
                rng.random_range(0.0..=1.0)
            };
            (random_group(&mut rng, size, true), tau)
        })
        .collect();
    let mismatches: Vec<usize> = groups
        .par_iter()
        .enumerate()
        .filter_map(|(i, (rewards, tau))| {
            let config = HdiConfig::new(*tau).unwrap();
            let h = find_hdi(rewards, config).unwrap();
            let oracle = exhaustive_min_window(rewards, config.window_size(rewards.len()));
            (h.length != oracle).then_some(i)
        })
        .collect();
    let elapsed = start.elapsed();
    check(
        mismatches.is_empty() && elapsed < Duration::from_secs(10),
        format!(
            "{} groups, {} mismatches, {elapsed:.2?} (limit 10 s)",
            groups.len(),
            mismatches.len()
        ),
    )
}

fn c2_hdi_performance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let rewards: Vec<f64> = (0..1_000_000).map(|_| rng.random::<f64>()).collect();
    let start = Instant::now();
    let h = find_hdi(&rewards, HdiConfig::new(0.5).unwrap()).unwrap();
    let elapsed = start.elapsed();
    check(
        elapsed < Duration::from_secs(1) && h.window_size() == 500_000,
        format!("10^6 rewards in {elapsed:.2?} (limit 1 s)"),
    )
}

fn recursive_distance(a: &[u8], b: &[u8], memo: &mut [[Option<usize>; 7]; 7]) -> usize {
    if let Some(d) = memo[a.len()][b.len()] {
        return d;
    }
    let d = match (a.split_last(), b.split_last()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let substitute = recursive_distance(ra, rb, memo) + usize::from(x != y);
            let delete = recursive_distance(ra, b, memo) + 1;
            let insert = recursive_distance(a, rb, memo) + 1;
            substitute.min(delete).min(insert)
        }
    };
    memo[a.len()][b.len()] = Some(d);
    d
}

fn all_sequences(max_len: usize, alphabet: u8) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        frontier = frontier
            .iter()
            .flat_map(|s: &Vec<u8>| {
                (0..alphabet).map(move |c| {
                    let mut t = s.clone();
                    t.push(c);
                    t
                })
            })
            .collect();
        out.extend(frontier.iter().cloned());
    }
    out
}

fn c3_edit_distance_oracle() -> Outcome {
    let seqs = all_sequences(6, 3);
    let disagreements: usize = seqs
        .par_iter()
        .map(|a| {
            seqs.iter()
                .filter(|b| {
                    let mut memo = [[None; 7]; 7];
                    edit_distance(a, b) != recursive_distance(a, b, &mut memo)
                })
                .count()
        })
        .sum();
    let pairs = seqs.len() * seqs.len();
    check(
        disagreements == 0,
        format!("{pairs} pairs, {disagreements} disagreements"),
    )
}

fn c4_reward_spot_values() -> Outcome {
    let cases = [
        ("kitten", "sitting", 2.0 / 7.0),
        ("", "abc", 0.0),
        ("abc", "abc", 1.0),
        ("", "", 1.0),
        ("x", "x", 1.0),
    ];
    let worst = cases
        .iter()
        .map(|(p, t, want)| (text_reward(p, t).get() - want).abs())
        .fold(0.0, f64::max);
    check(
        worst <= 1e-12,
        format!("{} cases, max error {worst:e} (tol 1e-12)", cases.len()),
    )
}

fn c5_affine_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let groups: Vec<Vec<f64>> = (0..1000)
        .map(|_| {
            let size = rng.random_range(2..=64);
            random_group(&mut rng, size, false)
        })
        .collect();
    let mut worst: f64 = 0.0;
    let mut comparisons = 0;
    for estimator in [Estimator::GapoMedianDiv, Estimator::GapoMeanDiv] {
        let config = AdvantageConfig::new(estimator, 0.5);
        for rewards in &groups {
            let base = advantages_for(rewards, &config).unwrap();
            for a in [0.5, 2.0, 10.0] {
                for c in [-0.3, 0.2] {
                    let mapped: Vec<f64> = rewards.iter().map(|r| a * r + c).collect();
                    let adv = advantages_for(&mapped, &config).unwrap();
                    for (x, y) in base.advantages.iter().zip(&adv.advantages) {
                        worst = worst.max((x - y).abs());
                    }
                    comparisons += 1;
                }
            }
        }
    }
    check(
        worst <= 1e-9,
        format!("{comparisons} mapped groups over median-div and mean-div, max diff {worst:e} (tol 1e-9)"),
    )
}

fn c6_sign_containment() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let gapo = AdvantageConfig::new(Estimator::GapoMedianDiv, 0.5);
    let grpo = AdvantageConfig::new(Estimator::Grpo, 0.5);
    let (mut above, mut below, mut violations) = (0, 0, 0);
    for _ in 0..10_000 {
        let size = rng.random_range(3..=32);
        let rewards = skewed_mixture(&mut rng, size);
        let q = adaptive_q(&rewards, HdiConfig::new(0.5).unwrap()).unwrap();
        let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
        let g = advantages_for(&rewards, &gapo).unwrap();
        let b = advantages_for(&rewards, &grpo).unwrap();
        if q > mean {
            above += 1;
            violations += usize::from(g.negative_count < b.negative_count);
        } else if q < mean {
            below += 1;
            violations += usize::from(g.positive_count() < b.positive_count());
        }
    }
    check(
        violations == 0 && above > 0 && below > 0,
        format!("Q>mean in {above} groups, Q<mean in {below}, {violations} violations"),
    )
}

fn random_policy(rng: &mut ChaCha8Rng, scale: f64) -> TabularPolicy {
    let logits = (0..6).map(|_| rng.random_range(-scale..scale)).collect();
    TabularPolicy::from_logits(2, 3, logits).unwrap()
}

/// True when every importance ratio is at least `margin` away from both clip
/// boundaries, so central differences never straddle a kink.
fn away_from_kinks(
    p: &TabularPolicy,
    old: &TabularPolicy,
    seqs: &[Vec<usize>],
    eps: f64,
    margin: f64,
) -> bool {
    seqs.iter().all(|seq| {
        seq.iter().enumerate().all(|(t, &u)| {
            let ratio = (p.log_probs(t)[u] - old.log_probs(t)[u]).exp();
            (ratio - (1.0 + eps)).abs() > margin && (ratio - (1.0 - eps)).abs() > margin
        })
    })
}

fn c7_gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let mut worst: f64 = 0.0;
    let mut componentwise: f64 = 0.0;
    let mut instances = 0;
    let mut clipped = 0;
    for estimator in Estimator::ALL {
        for beta in [0.0, 0.05] {
            let mut done = 0;
            while done < 25 {
                let old = random_policy(&mut rng, 1.0);
                let reference = random_policy(&mut rng, 1.0);
                let logits: Vec<f64> = old
                    .logits()
                    .iter()
                    .map(|l| l + rng.random_range(-0.4..0.4))
                    .collect();
                let policy = TabularPolicy::from_logits(2, 3, logits).unwrap();
                let seqs: Vec<Vec<usize>> = (0..8).map(|_| old.sample(&mut rng)).collect();
                if !away_from_kinks(&policy, &old, &seqs, 0.2, 1e-3) {
                    continue;
                }
                let rewards: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
                let adv = advantages_for(&rewards, &AdvantageConfig::new(estimator, 0.5)).unwrap();
                let batch = SurrogateBatch {
                    old: &old,
                    reference: &reference,
                    sequences: &seqs,
                    advantages: &adv.advantages,
                    epsilon: 0.2,
                    beta,
                };
                let out = batch.evaluate(&policy);
                let fd = batch.finite_difference_gradient(&policy, 1e-5);
                worst = worst.max(max_relative_error(&out.gradient, &fd));
                for (a, n) in out.gradient.iter().zip(&fd) {
                    componentwise =
                        componentwise.max((a - n).abs() / a.abs().max(n.abs()).max(1e-6));
                }
                clipped += out.clipped_terms;
                instances += 1;
                done += 1;
            }
        }
    }
    check(
        worst < 1e-6 && clipped > 0,
        format!(
            "{instances} instances, {clipped} clipped terms, max relative error {worst:e} (tol 1e-6); \
             per-component with 1e-6 floor {componentwise:e} (reported)"
        ),
    )
}

struct ProtocolRun {
    final_reward: [f64; 10],
    clipfrac: [f64; 10],
}

fn protocol_config(estimator: Estimator, seed: u64) -> TrainConfig {
    let mut config = TrainConfig {
        group_size: 8,
        epsilon: 0.2,
        beta: 0.01,
        steps: 300,
        inner_epochs: 2,
        prompts: 32,
        length: 6,
        vocab: 5,
        seed,
        outlier: OutlierSpec {
            probability: 0.15,
            mode: OutlierMode::LowTail,
        },
        ..TrainConfig::default()
    };
    config.advantage = AdvantageConfig::new(estimator, 0.5);
    config
}

fn run_protocol(estimator: Estimator) -> ProtocolRun {
    let summaries: Vec<_> = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            run_experiment(&protocol_config(estimator, seed))
                .unwrap()
                .summary
        })
        .collect();
    let mut run = ProtocolRun {
        final_reward: [0.0; 10],
        clipfrac: [0.0; 10],
    };
    for (i, s) in summaries.iter().enumerate() {
        run.final_reward[i] = s.final_mean_reward;
        run.clipfrac[i] = s.mean_pg_clipfrac;
    }
    run
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

struct Protocol {
    grpo: ProtocolRun,
    median_div: ProtocolRun,
    mean_div: ProtocolRun,
    median_std: ProtocolRun,
    elapsed: Duration,
}

fn protocol() -> Protocol {
    let start = Instant::now();
    let mut runs: Vec<ProtocolRun> = Estimator::ALL
        .par_iter()
        .map(|&e| run_protocol(e))
        .collect();
    let elapsed = start.elapsed();
    let index = |e: Estimator| Estimator::ALL.iter().position(|x| *x == e).unwrap();
    let mut take = |e: Estimator| {
        std::mem::replace(
            &mut runs[index(e)],
            ProtocolRun {
                final_reward: [0.0; 10],
                clipfrac: [0.0; 10],
            },
        )
    };
    Protocol {
        grpo: take(Estimator::Grpo),
        median_div: take(Estimator::GapoMedianDiv),
        mean_div: take(Estimator::GapoMeanDiv),
        median_std: take(Estimator::GapoMedianStd),
        elapsed,
    }
}

fn c8_directional(p: &Protocol) -> Outcome {
    let wins = (0..10)
        .filter(|&i| p.median_div.final_reward[i] >= p.grpo.final_reward[i])
        .count();
    let clip_gapo = mean(&p.median_div.clipfrac);
    let clip_grpo = mean(&p.grpo.clipfrac);
    check(
        wins >= 7 && clip_gapo <= clip_grpo && p.elapsed < Duration::from_secs(300),
        format!(
            "gapo-median-div >= grpo in {wins}/10 seeds (need 7); mean clipfrac {clip_gapo:.5} vs {clip_grpo:.5}; \
             mean reward {:.4} vs {:.4}; {:.1?} for all estimators (limit 5 min)",
            mean(&p.median_div.final_reward),
            mean(&p.grpo.final_reward),
            p.elapsed
        ),
    )
}

fn c9_ablation(p: &Protocol) -> Outcome {
    let median_div = mean(&p.median_div.final_reward);
    let mean_div = mean(&p.mean_div.final_reward);
    check(
        median_div >= mean_div,
        format!(
            "median-div {median_div:.4} >= mean-div {mean_div:.4}; median-std {:.4} and grpo {:.4} reported only",
            mean(&p.median_std.final_reward),
            mean(&p.grpo.final_reward)
        ),
    )
}

fn c10_degenerate() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let mut groups = Vec::new();
    for size in 1..=16 {
        for value in [0.0, 1.0, rng.random::<f64>()] {
            groups.push(RewardGroup::new(format!("c{size}-{value}"), vec![value; size]).unwrap());
        }
    }
    let mut nonzero = 0;
    for group in &groups {
        for estimator in Estimator::ALL {
            let adv = compute_advantages(group, &AdvantageConfig::new(estimator, 0.5)).unwrap();
            if !adv.degenerate || adv.advantages.iter().any(|&a| a != 0.0) {
                nonzero += 1;
            }
        }
    }
    let constant_count = groups.len();
    let mut mixed = groups.clone();
    mixed.push(RewardGroup::new("varied", vec![0.2, 0.9]).unwrap());
    let (kept, dropped) = dynamic_sample_filter(mixed);
    let filtered = kept.len() == 1 && dropped.len() == constant_count;

    let config = TrainConfig {
        beta: 0.0,
        prompts: 8,
        outlier: OutlierSpec::none(),
        ..TrainConfig::default()
    };
    let tasks = generate_tasks(&config).unwrap();
    let mut identical = true;
    for estimator in Estimator::ALL {
        let mut config = config.clone();
        config.advantage.estimator = estimator;
        let mut policies: Vec<TabularPolicy> = tasks
            .iter()
            .map(|t| TabularPolicy::peaked(&t.target, t.vocab, 60.0).unwrap())
            .collect();
        let before: Vec<u64> = policies
            .iter()
            .flat_map(|p| p.logits().iter().map(|x| x.to_bits()))
            .collect();
        let references = policies.clone();
        let mut rngs: Vec<_> = (0..tasks.len()).map(|i| prompt_rng(3, i)).collect();
        let m = train_step(&mut policies, &references, &tasks, &config, &mut rngs, 0).unwrap();
        let after: Vec<u64> = policies
            .iter()
            .flat_map(|p| p.logits().iter().map(|x| x.to_bits()))
            .collect();
        identical &= m.clean_mean_reward == 1.0 && before == after;
    }
    check(
        nonzero == 0 && filtered && identical,
        format!(
            "{constant_count} constant groups x 4 estimators all zero: {}; filter drops all: {filtered}; \
             policy bit-identical after degenerate step: {identical}",
            nonzero == 0
        ),
    )
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

fn gapo_cli(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_gapo"))
        .args(args)
        .env_remove("GAPO_TAU")
        .output()
        .expect("failed to launch gapo");
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn c11_cli_golden() -> Outcome {
    let groups = golden("groups.jsonl");
    let groups = groups.to_str().unwrap();
    let pairs = golden("pairs.jsonl");
    let mut mismatched = Vec::new();
    for _run in 0..2 {
        for estimator in [
            "grpo",
            "gapo-median-div",
            "gapo-median-std",
            "gapo-mean-div",
        ] {
            let out = gapo_cli(&["advantage", "--estimator", estimator, "--input", groups]);
            if out != fs::read(golden(&format!("advantage_{estimator}.expected.jsonl"))).unwrap() {
                mismatched.push(format!("advantage {estimator}"));
            }
        }
        if gapo_cli(&["reward", "--input", pairs.to_str().unwrap()])
            != fs::read(golden("reward.expected.jsonl")).unwrap()
        {
            mismatched.push("reward".into());
        }
        if gapo_cli(&["analyze", "--input", groups])
            != fs::read(golden("analyze.expected.json")).unwrap()
        {
            mismatched.push("analyze".into());
        }
        let dir = tempfile::tempdir().unwrap();
        let config = golden("simulate.cfg");
        gapo_cli(&[
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        for (produced, expected) in [
            ("metrics.jsonl", "simulate_metrics.expected.jsonl"),
            ("summary.json", "simulate_summary.expected.json"),
        ] {
            if fs::read(dir.path().join(produced)).unwrap() != fs::read(golden(expected)).unwrap() {
                mismatched.push(format!("simulate {produced}"));
            }
        }
    }
    check(
        mismatched.is_empty(),
        if mismatched.is_empty() {
            "advantage (4 estimators), reward, analyze, simulate byte-identical over 2 runs".into()
        } else {
            format!("mismatched: {}", mismatched.join(", "))
        },
    )
}

fn run_guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    })
}

fn main() {
    let protocol = panic::catch_unwind(protocol).ok();
    let needs_protocol = |f: fn(&Protocol) -> Outcome| {
        let p = protocol.as_ref();
        move || p.map_or_else(|| Err("training protocol panicked".into()), f)
    };

    let results = [
        (
            "C1 ",
            "hdi matches exhaustive window scan",
            run_guarded(c1_hdi_oracle),
        ),
        (
            "C2 ",
            "hdi on 10^6 rewards under 1 s",
            run_guarded(c2_hdi_performance),
        ),
        (
            "C3 ",
            "edit distance matches recursive oracle",
            run_guarded(c3_edit_distance_oracle),
        ),
        (
            "C4 ",
            "composite reward spot values",
            run_guarded(c4_reward_spot_values),
        ),
        (
            "C5 ",
            "div estimators are affine invariant",
            run_guarded(c5_affine_invariance),
        ),
        (
            "C6 ",
            "sign-set containment",
            run_guarded(c6_sign_containment),
        ),
        (
            "C7 ",
            "surrogate gradient vs finite differences",
            run_guarded(c7_gradient_check),
        ),
        (
            "C8 ",
            "gapo vs grpo directional training",
            run_guarded(needs_protocol(c8_directional)),
        ),
        (
            "C9 ",
            "median-div vs mean-div ablation",
            run_guarded(needs_protocol(c9_ablation)),
        ),
        (
            "C10",
            "degenerate group handling",
            run_guarded(c10_degenerate),
        ),
        ("C11", "cli golden files", run_guarded(c11_cli_golden)),
    ];

    let mut failed = 0;
    for (id, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS {id} {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id} {name}: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
