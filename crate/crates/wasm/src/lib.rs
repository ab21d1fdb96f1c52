//! WebAssembly bindings for the demo page in `www/`.
//!
//! Three operations, each a thin wrapper over a plain function that native
//! tests can call:
//! - [`regret_chart`]: cumulative regret of several policies on a synthetic
//!   linear environment, rendered as SVG.
//! - [`epsilon_curve`]: the exploration probability of a policy over time.
//! - [`pick_slate`]: one top-K slate chosen from user-supplied scores.

use topk_bandit::chart::{line_chart_svg, ChartSeries};
use topk_bandit::environments::{DataPools, EnvKind, EnvSpec};
use topk_bandit::models::{ModelKind, ModelSpec};
use topk_bandit::policies::{epsilon_schedule, PolicyKind, PolicySpec};
use topk_bandit::rng::stream;
use topk_bandit::{run_experiment, select_top_k_scores, BanditError, ExperimentConfig, Result};
use wasm_bindgen::prelude::*;

/// Longest horizon the page may request; keeps a click under a few seconds.
pub const MAX_HORIZON: usize = 5000;

fn parse_policies(list: &str) -> Result<Vec<PolicyKind>> {
    let kinds = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<Vec<PolicyKind>>>()?;
    if kinds.is_empty() {
        return Err(BanditError::InvalidArgument("no policy selected".into()));
    }
    Ok(kinds)
}

/// Cumulative regret per policy, in the order given.
pub fn simulate_regret(
    policies: &str,
    model: &str,
    n: usize,
    k: usize,
    horizon: usize,
    seed: u64,
) -> Result<Vec<(PolicyKind, Vec<f64>)>> {
    if horizon > MAX_HORIZON {
        return Err(BanditError::InvalidArgument(format!(
            "horizon is limited to {MAX_HORIZON} rounds in the demo"
        )));
    }
    let model: ModelKind = model.parse()?;
    if model == ModelKind::Cnn {
        return Err(BanditError::InvalidArgument(
            "the synthetic environment has no images; pick linear, neural_linear or mlp".into(),
        ));
    }
    let pools = DataPools::new();
    let mut out = Vec::new();
    for kind in parse_policies(policies)? {
        let mut env = EnvSpec::new(EnvKind::Synthetic);
        env.n = n;
        env.k = k;
        let spec = ModelSpec {
            kind: model,
            hidden: 32,
            dropout: if kind == PolicyKind::ThompsonDropout {
                0.1
            } else {
                0.0
            },
            ..ModelSpec::default()
        };
        let mut config = ExperimentConfig::new(env, spec, PolicySpec::of_kind(kind));
        config.horizon = horizon;
        config.seed = seed;
        if model != ModelKind::Linear {
            config.retrain_every = 50;
            config.epochs_per_fit = 8;
        }
        out.push((kind, run_experiment(&config, &pools)?.cum_regret));
    }
    Ok(out)
}

pub fn regret_chart_svg(
    policies: &str,
    model: &str,
    n: usize,
    k: usize,
    horizon: usize,
    seed: u64,
) -> Result<String> {
    let runs = simulate_regret(policies, model, n, k, horizon, seed)?;
    let series: Vec<ChartSeries> = runs
        .into_iter()
        .map(|(kind, values)| ChartSeries {
            label: format!("{kind}/{model}"),
            values,
        })
        .collect();
    Ok(line_chart_svg(
        &format!("Synthetic linear arms, n = {n}, K = {k}"),
        "cumulative regret",
        &series,
    ))
}

/// Exploration probability at rounds 1..=horizon.
pub fn epsilon_values(
    policy: &str,
    epsilon0: f64,
    decay_scale: f64,
    horizon: usize,
) -> Result<Vec<f64>> {
    let spec = PolicySpec {
        epsilon0,
        decay_scale,
        ..PolicySpec::of_kind(policy.parse()?)
    };
    spec.validate()?;
    Ok((1..=horizon.min(MAX_HORIZON))
        .map(|t| epsilon_schedule(&spec, t))
        .collect())
}

/// Slate picks in slot order.
pub fn slate_picks(
    scores: &[f64],
    k: usize,
    policy: &str,
    epsilon0: f64,
    seed: u64,
) -> Result<Vec<u32>> {
    let spec = PolicySpec {
        epsilon0,
        ..PolicySpec::of_kind(policy.parse()?)
    };
    spec.validate()?;
    let slate = select_top_k_scores(scores, k, &spec, 1, &mut stream(seed, 0))?;
    Ok(slate.picks.into_iter().map(|p| p as u32).collect())
}

fn js_error(e: BanditError) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = regretChart)]
pub fn regret_chart(
    policies: &str,
    model: &str,
    n: usize,
    k: usize,
    horizon: usize,
    seed: u32,
) -> std::result::Result<String, JsError> {
    regret_chart_svg(policies, model, n, k, horizon, seed.into()).map_err(js_error)
}

#[wasm_bindgen(js_name = epsilonCurve)]
pub fn epsilon_curve(
    policy: &str,
    epsilon0: f64,
    decay_scale: f64,
    horizon: usize,
) -> std::result::Result<Vec<f64>, JsError> {
    epsilon_values(policy, epsilon0, decay_scale, horizon).map_err(js_error)
}

#[wasm_bindgen(js_name = pickSlate)]
pub fn pick_slate(
    scores: &[f64],
    k: usize,
    policy: &str,
    epsilon0: f64,
    seed: u32,
) -> std::result::Result<Vec<u32>, JsError> {
    slate_picks(scores, k, policy, epsilon0, seed.into()).map_err(js_error)
}
