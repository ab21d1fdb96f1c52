//! Self-checks behind the `check` command: finite-difference gradient checks
//! for each differentiable model family and exhaustive-search equivalence of
//! the slate selection.

use rand::Rng;

use crate::bandit::select_top_k_scores;
use crate::environments::oracle_top_k;
use crate::error::Result;
use crate::models::{gradient_check, GradientReport, LinearModel, Network, TrainingSet};
use crate::policies::{PolicyKind, PolicySpec};
use crate::rng::{stream, SimRng};

pub const MLP_TOLERANCE: f64 = 1e-4;
pub const CNN_TOLERANCE: f64 = 1e-3;
pub const LINEAR_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Sum of `values` at the set bits of `mask`, in index order.
fn masked_sum(values: &[f64], mask: u32) -> f64 {
    (0..values.len())
        .filter(|i| mask >> i & 1 == 1)
        .map(|i| values[i])
        .sum()
}

/// Largest total of any `k`-subset, by enumerating all of them.
pub fn brute_force_best(values: &[f64], k: usize) -> f64 {
    assert!(values.len() < 32);
    (0u32..1 << values.len())
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| masked_sum(values, m))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn random_set(dim: usize, count: usize, rng: &mut SimRng) -> TrainingSet {
    let mut set = TrainingSet::new(dim);
    for _ in 0..count {
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(0.0..1.0)).collect();
        set.push(&x, rng.random_range(-1.0..1.0))
            .expect("dimension");
    }
    set
}

/// Gradient check of a width-100 perceptron (50 probes, h = 1e-4).
pub fn mlp_gradient_error(seed: u64) -> Result<GradientReport> {
    let mut rng = stream(seed, 10);
    let mut net = Network::mlp(20, 100, 0.0, &mut rng);
    let data = random_set(20, 32, &mut rng);
    gradient_check(&mut net, &data, 50, 1e-4, &mut rng)
}

/// Gradient check of the 28x28 convolutional model (25 probes, h = 1e-3).
pub fn cnn_gradient_error(seed: u64) -> Result<GradientReport> {
    let mut rng = stream(seed, 11);
    let mut net = Network::cnn(28, 100, 0.0, &mut rng)?;
    let data = random_set(28 * 28, 6, &mut rng);
    gradient_check(&mut net, &data, 25, 1e-3, &mut rng)
}

pub fn linear_gradient_error(seed: u64) -> Result<GradientReport> {
    let mut rng = stream(seed, 12);
    let weights: Vec<f64> = (0..11).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut model = LinearModel::with_weights(weights, 1.0)?;
    let data = random_set(10, 40, &mut rng);
    gradient_check(&mut model, &data, 11, 1e-4, &mut rng)
}

/// Instances (out of `count`, `n <= 8`) where the greedy slate's total differs
/// from the exhaustive optimum. Half the instances use small integer scores so
/// that ties occur.
pub fn greedy_oracle_mismatches(count: usize, seed: u64) -> Result<usize> {
    let mut rng = stream(seed, 13);
    let greedy = PolicySpec::of_kind(PolicyKind::Greedy);
    let mut mismatches = 0;
    for i in 0..count {
        let n = rng.random_range(1..=8usize);
        let k = rng.random_range(1..=n);
        let scores: Vec<f64> = if i % 2 == 0 {
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
        } else {
            (0..n).map(|_| rng.random_range(0..5) as f64).collect()
        };
        let slate = select_top_k_scores(&scores, k, &greedy, 1, &mut rng)?;
        let mask = slate.picks.iter().fold(0u32, |m, &p| m | 1 << p);
        let distinct = mask.count_ones() as usize == k;
        let (_, oracle) = oracle_top_k(&scores, k)?;
        let best = brute_force_best(&scores, k);
        if !distinct || masked_sum(&scores, mask) != best || (oracle - best).abs() > 1e-12 {
            mismatches += 1;
        }
    }
    Ok(mismatches)
}

/// Trials (out of `count`) in which some policy returned a duplicate arm.
pub fn duplicate_pick_trials(count: usize, seed: u64) -> Result<usize> {
    let mut rng = stream(seed, 14);
    let mut bad = 0;
    for i in 0..count {
        let kind = PolicyKind::ALL[i % PolicyKind::ALL.len()];
        let spec = PolicySpec {
            epsilon0: 0.5,
            ..PolicySpec::of_kind(kind)
        };
        let n = rng.random_range(1..=12usize);
        let k = rng.random_range(1..=n);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..3) as f64).collect();
        let slate = select_top_k_scores(&scores, k, &spec, i + 1, &mut rng)?;
        let mut picks = slate.picks.clone();
        picks.sort_unstable();
        picks.dedup();
        if picks.len() != k || picks.iter().any(|&p| p >= n) {
            bad += 1;
        }
    }
    Ok(bad)
}

/// Runs every check with a fixed seed.
pub fn run_checks(seed: u64) -> Vec<CheckOutcome> {
    fn bound(name: &'static str, value: Result<GradientReport>, tol: f64) -> CheckOutcome {
        match value {
            Ok(r) => CheckOutcome {
                name,
                passed: r.max_relative_error < tol,
                detail: format!(
                    "max relative error {:.3e} (limit {tol:.0e}) over {} probes, {} skipped at kinks",
                    r.max_relative_error, r.probes, r.kinks_skipped
                ),
            },
            Err(e) => CheckOutcome {
                name,
                passed: false,
                detail: e.to_string(),
            },
        }
    }
    fn zero(name: &'static str, value: Result<usize>, of: usize) -> CheckOutcome {
        match value {
            Ok(v) => CheckOutcome {
                name,
                passed: v == 0,
                detail: format!("{v} failures in {of} instances"),
            },
            Err(e) => CheckOutcome {
                name,
                passed: false,
                detail: e.to_string(),
            },
        }
    }
    vec![
        bound(
            "gradient/linear",
            linear_gradient_error(seed),
            LINEAR_TOLERANCE,
        ),
        bound("gradient/mlp", mlp_gradient_error(seed), MLP_TOLERANCE),
        bound("gradient/cnn", cnn_gradient_error(seed), CNN_TOLERANCE),
        zero(
            "oracle/greedy-equals-exhaustive",
            greedy_oracle_mismatches(1000, seed),
            1000,
        ),
        zero(
            "slate/no-duplicates",
            duplicate_pick_trials(10_000, seed),
            10_000,
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brute_force_small_case() {
        assert_eq!(brute_force_best(&[3.0, 1.0, 2.0], 2), 5.0);
        assert_eq!(brute_force_best(&[1.0], 1), 1.0);
    }

    #[test]
    fn mlp_gradients_within_tolerance() {
        let report = mlp_gradient_error(1).unwrap();
        assert_eq!(report.probes, 50);
        assert!(report.max_relative_error < MLP_TOLERANCE, "{report:?}");
    }

    #[test]
    fn cnn_gradients_within_tolerance() {
        let report = cnn_gradient_error(1).unwrap();
        assert_eq!(report.probes, 25);
        assert!(report.max_relative_error < CNN_TOLERANCE, "{report:?}");
    }

    #[test]
    fn greedy_equals_exhaustive_search() {
        assert_eq!(greedy_oracle_mismatches(300, 2).unwrap(), 0);
    }
}
