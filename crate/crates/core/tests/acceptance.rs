//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Runs without the test harness so the lines
//! are always shown.
//!
//! Criteria 5 and 6 replay full learning runs on the mushroom and MNIST data
//! and dominate the runtime (tens of minutes on one core). Every neural model
//! is refit from scratch every 100 rounds on the whole history.

use std::path::PathBuf;
use std::time::Instant;

use topk_bandit::chart::{line_chart_svg, ChartSeries};
use topk_bandit::environments::{
    mnist, parse_idx, parse_mushroom_csv, DataPools, EnvKind, EnvSpec, Environment, MnistEnv,
    MushroomEnv, MNIST_DIR, MUSHROOM_FILE,
};
use topk_bandit::metrics::mean_sd;
use topk_bandit::models::{ModelKind, ModelSpec};
use topk_bandit::policies::{PolicyKind, PolicySpec};
use topk_bandit::rng::stream;
use topk_bandit::verify::{
    cnn_gradient_error, greedy_oracle_mismatches, mlp_gradient_error, CNN_TOLERANCE, MLP_TOLERANCE,
};
use topk_bandit::{compare, run_experiment, Experiment, ExperimentConfig, ExperimentTrace, Result};

/// Refit cadence for the learning runs of criteria 5 and 6.
const RETRAIN_EVERY: usize = 100;

fn data_root() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data"))
}

fn env_spec(kind: EnvKind) -> EnvSpec {
    let mut env = EnvSpec::new(kind);
    env.data_path = match kind {
        EnvKind::Mushroom => Some(data_root().join(MUSHROOM_FILE)),
        EnvKind::Mnist => Some(data_root().join(MNIST_DIR)),
        EnvKind::Synthetic => None,
    };
    env
}

fn config(env: EnvSpec, model: ModelKind, policy: PolicyKind) -> ExperimentConfig {
    let model = ModelSpec {
        kind: model,
        dropout: if policy == PolicyKind::ThompsonDropout {
            0.1
        } else {
            0.0
        },
        ..ModelSpec::default()
    };
    ExperimentConfig::new(env, model, PolicySpec::of_kind(policy))
}

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Result<Verdict> {
    Ok(Verdict { passed, detail })
}

fn gradients() -> Result<Verdict> {
    let mut worst_mlp: f64 = 0.0;
    let mut worst_cnn: f64 = 0.0;
    let mut skipped = 0;
    for seed in 1..=3 {
        let mlp = mlp_gradient_error(seed)?;
        let cnn = cnn_gradient_error(seed)?;
        worst_mlp = worst_mlp.max(mlp.max_relative_error);
        worst_cnn = worst_cnn.max(cnn.max_relative_error);
        skipped += mlp.kinks_skipped + cnn.kinks_skipped;
    }
    verdict(
        worst_mlp < MLP_TOLERANCE && worst_cnn < CNN_TOLERANCE,
        format!(
            "max relative error mlp {worst_mlp:.2e} (< {MLP_TOLERANCE:.0e}), cnn {worst_cnn:.2e} (< {CNN_TOLERANCE:.0e}) over 3 seeds; {skipped} probes skipped at kinks"
        ),
    )
}

fn oracle_equivalence() -> Result<Verdict> {
    let mismatches = greedy_oracle_mismatches(1000, 2024)?;
    verdict(
        mismatches == 0,
        format!("{mismatches} mismatches in 1000 instances with n <= 8"),
    )
}

fn regret_sanity(pools: &DataPools) -> Result<Verdict> {
    let mut rounds = 0;
    let mut violations = 0;
    for kind in [EnvKind::Synthetic, EnvKind::Mushroom, EnvKind::Mnist] {
        for seed in 0..10u64 {
            let policy = PolicyKind::ALL[seed as usize % PolicyKind::ALL.len()];
            let mut cfg = config(env_spec(kind), ModelKind::Linear, policy);
            cfg.horizon = 200;
            cfg.retrain_every = 20;
            cfg.seed = seed;
            let mut run = Experiment::new(cfg, pools)?;
            while !run.is_finished() {
                if run.step()?.regret() < 0.0 {
                    violations += 1;
                }
                rounds += 1;
            }
            let trace = run.trace()?;
            violations += trace.cum_regret.windows(2).filter(|w| w[1] < w[0]).count();
        }
    }
    verdict(
        violations == 0,
        format!(
            "{violations} violations over {rounds} rounds (3 environments x 10 seeds, T = 200)"
        ),
    )
}

fn final_window_mean(trace: &ExperimentTrace, window: usize) -> f64 {
    let r = &trace.cum_regret;
    let end = r[r.len() - 1];
    let start = r[r.len() - 1 - window];
    (end - start) / window as f64
}

fn synthetic_recovery(pools: &DataPools) -> Result<Verdict> {
    let mut linear = Vec::new();
    let mut random = Vec::new();
    for seed in 1..=5 {
        for (policy, out) in [
            (PolicyKind::Greedy, &mut linear),
            (PolicyKind::Random, &mut random),
        ] {
            let mut cfg = config(env_spec(EnvKind::Synthetic), ModelKind::Linear, policy);
            cfg.horizon = 1000;
            cfg.seed = seed;
            out.push(final_window_mean(&run_experiment(&cfg, pools)?, 100));
        }
    }
    let (lin, _) = mean_sd(&linear);
    let (rnd, _) = mean_sd(&random);
    verdict(
        lin < 0.1 * rnd,
        format!("final-100 mean per-round regret: linear greedy {lin:.4}, random {rnd:.4}, ratio {:.4} (< 0.1)", lin / rnd),
    )
}

fn mushroom_ordering(pools: &DataPools) -> Result<Verdict> {
    let cells = [
        (PolicyKind::Random, ModelKind::Linear),
        (PolicyKind::Greedy, ModelKind::Linear),
        (PolicyKind::Greedy, ModelKind::NeuralLinear),
        (PolicyKind::EpsilonGreedy, ModelKind::Mlp),
        (PolicyKind::DecayingEpsilon, ModelKind::Mlp),
        (PolicyKind::ThompsonDropout, ModelKind::Mlp),
    ];
    let mut traces = Vec::new();
    for (policy, model) in cells {
        for seed in 1..=5 {
            let mut cfg = config(env_spec(EnvKind::Mushroom), model, policy);
            cfg.horizon = 2000;
            cfg.retrain_every = RETRAIN_EVERY;
            cfg.seed = seed;
            traces.push(run_experiment(&cfg, pools)?);
        }
    }
    let table = compare(&traces)?;
    let mean = |p: PolicyKind, m: ModelKind| {
        table
            .final_mean_regret(p.as_str(), m.as_str())
            .expect("cell present")
    };
    let random = mean(PolicyKind::Random, ModelKind::Linear);
    let learners: Vec<(String, f64)> = cells[1..]
        .iter()
        .map(|&(p, m)| (format!("{p}/{m}"), mean(p, m)))
        .collect();
    let below_half = learners.iter().all(|(_, r)| *r < 0.5 * random);
    let thompson = mean(PolicyKind::ThompsonDropout, ModelKind::Mlp);
    let linear_first = mean(PolicyKind::Greedy, ModelKind::Linear) <= thompson
        && mean(PolicyKind::Greedy, ModelKind::NeuralLinear) <= thompson;
    let listing: Vec<String> = learners
        .iter()
        .map(|(name, r)| format!("{name} {r:.1}"))
        .collect();
    verdict(
        below_half && linear_first,
        format!(
            "final mean regret over 5 seeds: random {random:.1}; {}; (a) all < {:.1}: {below_half}; (b) linear and neural_linear <= thompson: {linear_first}",
            listing.join(", "),
            0.5 * random
        ),
    )
}

fn mnist_ordering(pools: &DataPools) -> Result<Verdict> {
    let mut env = env_spec(EnvKind::Mnist);
    env.n = 10;
    env.k = 3;
    let mut traces = Vec::new();
    for (policy, model) in [
        (PolicyKind::Greedy, ModelKind::Linear),
        (PolicyKind::EpsilonGreedy, ModelKind::Cnn),
    ] {
        for seed in 1..=3 {
            let mut cfg = config(env.clone(), model, policy);
            cfg.horizon = 1500;
            cfg.retrain_every = RETRAIN_EVERY;
            cfg.seed = seed;
            traces.push(run_experiment(&cfg, pools)?);
        }
    }
    let table = compare(&traces)?;
    let linear = table
        .final_mean_regret("greedy", "linear")
        .expect("cell present");
    let cnn = table
        .final_mean_regret("epsilon_greedy", "cnn")
        .expect("cell present");
    verdict(
        cnn < linear,
        format!("final mean regret over 3 seeds: cnn epsilon_greedy {cnn:.1}, linear greedy {linear:.1}"),
    )
}

fn residual_sd(env: &mut dyn Environment, draws: usize, seed: u64) -> Result<f64> {
    let mut rng = stream(seed, 0);
    let mut residuals = Vec::with_capacity(draws);
    let mut t = 1;
    while residuals.len() < draws {
        let draw = env.draw_round(t, &mut rng)?;
        for arm in 0..draw.true_means.len() {
            residuals.push(draw.observe(arm, &mut rng) - draw.true_means[arm]);
        }
        t += 1;
    }
    residuals.truncate(draws);
    Ok(mean_sd(&residuals).1)
}

fn noise_statistics(pools: &DataPools) -> Result<Verdict> {
    let mushroom = pools.mushroom(&data_root().join(MUSHROOM_FILE))?;
    let mut env = MushroomEnv::new(mushroom, 30, 3, 0.5)?;
    let sd_m = residual_sd(&mut env, 10_000, 71)?;
    let digits = pools.mnist(&data_root().join(MNIST_DIR))?;
    let mut env = MnistEnv::new(digits, 20, 2.0)?;
    let sd_d = residual_sd(&mut env, 10_000, 72)?;
    let ok = (sd_m / 0.5 - 1.0).abs() < 0.05 && (sd_d / 2.0 - 1.0).abs() < 0.05;
    verdict(
        ok,
        format!("residual s.d. over 10000 draws: mushroom {sd_m:.4} (0.5 +/- 5%), mnist {sd_d:.4} (2.0 +/- 5%)"),
    )
}

fn determinism(pools: &DataPools) -> Result<Verdict> {
    let render = |pools: &DataPools| -> Result<(Vec<String>, String)> {
        let mut csvs = Vec::new();
        let mut series = Vec::new();
        for (policy, model) in [
            (PolicyKind::ThompsonDropout, ModelKind::Mlp),
            (PolicyKind::Greedy, ModelKind::NeuralLinear),
        ] {
            let mut cfg = config(env_spec(EnvKind::Mushroom), model, policy);
            cfg.horizon = 300;
            cfg.retrain_every = 50;
            cfg.seed = 7;
            let trace = run_experiment(&cfg, pools)?;
            csvs.push(trace.to_csv());
            series.push(ChartSeries {
                label: format!("{policy}/{model}"),
                values: trace.cum_regret.clone(),
            });
        }
        Ok((
            csvs,
            line_chart_svg("mushroom", "cumulative regret", &series),
        ))
    };
    let (csv_a, svg_a) = render(pools)?;
    let (csv_b, svg_b) = render(&DataPools::new())?;
    verdict(
        csv_a == csv_b && svg_a == svg_b,
        format!(
            "trace CSVs identical: {}, SVG identical: {} ({} bytes)",
            csv_a == csv_b,
            svg_a == svg_b,
            svg_a.len()
        ),
    )
}

fn ingestion() -> Result<Verdict> {
    let mushroom = parse_mushroom_csv(&data_root().join(MUSHROOM_FILE))?;
    let dir = data_root().join(MNIST_DIR);
    let digits = parse_idx(
        &dir.join(mnist::TRAIN_IMAGES),
        &dir.join(mnist::TRAIN_LABELS),
    )?;
    let in_range =
        (0..digits.len()).all(|i| digits.image(i).iter().all(|p| (0.0..=1.0).contains(p)));
    let (rows, cols) = digits.dims();
    verdict(
        mushroom.len() == 8124 && digits.len() == 60_000 && (rows, cols) == (28, 28) && in_range,
        format!(
            "mushroom records {}, mnist images {} of {rows}x{cols}, pixels in [0, 1]: {in_range}",
            mushroom.len(),
            digits.len()
        ),
    )
}

fn main() {
    let pools = DataPools::new();
    let criteria: [(&str, &dyn Fn() -> Result<Verdict>); 9] = [
        ("gradient correctness", &gradients),
        ("top-K oracle equivalence", &oracle_equivalence),
        ("regret sanity", &|| regret_sanity(&pools)),
        ("synthetic recovery", &|| synthetic_recovery(&pools)),
        ("mushroom ordering", &|| mushroom_ordering(&pools)),
        ("mnist ordering", &|| mnist_ordering(&pools)),
        ("noise statistics", &|| noise_statistics(&pools)),
        ("determinism", &|| determinism(&pools)),
        ("ingestion", &ingestion),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let (passed, detail) = match check() {
            Ok(v) => (v.passed, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        println!(
            "criterion {} {}: {} [{:.1}s] {}",
            i + 1,
            name,
            if passed { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64(),
            detail
        );
        if !passed {
            failed.push(i + 1);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
    println!("all 9 criteria passed");
}
