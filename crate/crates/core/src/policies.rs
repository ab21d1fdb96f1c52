//! Exploration-exploitation rules applied one slate slot at a time.
//!
//! A policy sees only the candidate indices still available at the current
//! slot and a scorer that can return point estimates or posterior draws for
//! them. It returns the chosen index and whether the choice was exploratory.

use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::error::{BanditError, Result};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    Greedy,
    Random,
    EpsilonGreedy,
    DecayingEpsilon,
    ThompsonDropout,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Greedy,
        PolicyKind::Random,
        PolicyKind::EpsilonGreedy,
        PolicyKind::DecayingEpsilon,
        PolicyKind::ThompsonDropout,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Greedy => "greedy",
            PolicyKind::Random => "random",
            PolicyKind::EpsilonGreedy => "epsilon_greedy",
            PolicyKind::DecayingEpsilon => "decaying_epsilon",
            PolicyKind::ThompsonDropout => "thompson_dropout",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = BanditError;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                BanditError::InvalidConfig(format!(
                    "policy.kind must be one of greedy, random, epsilon_greedy, \
                     decaying_epsilon, thompson_dropout; got {s:?}"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    /// Exploration probability for the epsilon kinds (initial value when decaying).
    pub epsilon0: f64,
    /// `c` in `epsilon_t = epsilon0 * c / (c + t)`.
    pub decay_scale: f64,
    /// Dropout passes averaged into one Thompson draw.
    pub posterior_samples: usize,
}

impl Default for PolicySpec {
    fn default() -> Self {
        Self {
            kind: PolicyKind::Greedy,
            epsilon0: 0.05,
            decay_scale: 100.0,
            posterior_samples: 1,
        }
    }
}

impl PolicySpec {
    pub fn of_kind(kind: PolicyKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon0) {
            return Err(BanditError::InvalidConfig(format!(
                "policy.epsilon0 must lie in [0, 1], got {}",
                self.epsilon0
            )));
        }
        if !(self.decay_scale > 0.0 && self.decay_scale.is_finite()) {
            return Err(BanditError::InvalidConfig(format!(
                "policy.decay_scale must be finite and > 0, got {}",
                self.decay_scale
            )));
        }
        if self.posterior_samples == 0 {
            return Err(BanditError::InvalidConfig(
                "policy.posterior_samples must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Exploration probability at round `t` (1-based).
///
/// Greedy and Thompson never explore uniformly, random always does, the
/// fixed-epsilon kind returns `epsilon0`, and the decaying kind follows
/// `epsilon0 * c / (c + t)`.
pub fn epsilon_schedule(spec: &PolicySpec, t: usize) -> f64 {
    match spec.kind {
        PolicyKind::Greedy | PolicyKind::ThompsonDropout => 0.0,
        PolicyKind::Random => 1.0,
        PolicyKind::EpsilonGreedy => spec.epsilon0,
        PolicyKind::DecayingEpsilon => {
            spec.epsilon0 * spec.decay_scale / (spec.decay_scale + t as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMode {
    PointEstimate,
    PosteriorSample,
}

/// A request for one score per candidate arm.
#[derive(Debug, Clone, Copy)]
pub struct ScoreRequest<'a> {
    pub candidates: &'a [usize],
    pub mode: ScoreMode,
}

/// Supplies per-arm scores for the arms of one round.
pub trait ArmScorer {
    fn arm_count(&self) -> usize;

    /// One score per entry of `request.candidates`, in the same order.
    fn score(&mut self, request: ScoreRequest<'_>, rng: &mut SimRng) -> Result<Vec<f64>>;
}

/// Fixed scores; posterior draws equal the point estimates.
#[derive(Debug, Clone)]
pub struct FixedScores<'a>(pub &'a [f64]);

impl ArmScorer for FixedScores<'_> {
    fn arm_count(&self) -> usize {
        self.0.len()
    }

    fn score(&mut self, request: ScoreRequest<'_>, _rng: &mut SimRng) -> Result<Vec<f64>> {
        Ok(request.candidates.iter().map(|&i| self.0[i]).collect())
    }
}

/// Positions in `scores` holding the maximum value.
fn maximizers(scores: &[f64]) -> Vec<usize> {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    scores
        .iter()
        .enumerate()
        .filter(|(_, s)| **s == best)
        .map(|(i, _)| i)
        .collect()
}

/// Argmax over candidates, ties broken uniformly at random.
fn argmax(candidates: &[usize], scores: &[f64], rng: &mut SimRng) -> usize {
    let ties = maximizers(scores);
    let pos = if ties.len() == 1 {
        ties[0]
    } else {
        *ties.choose(rng).expect("non-empty ties")
    };
    candidates[pos]
}

/// Chooses one arm from `candidates` at round `t`.
pub fn choose_arm(
    spec: &PolicySpec,
    candidates: &[usize],
    scorer: &mut dyn ArmScorer,
    t: usize,
    rng: &mut SimRng,
) -> Result<(usize, bool)> {
    if candidates.is_empty() {
        return Err(BanditError::InvalidArgument(
            "candidate set is empty".into(),
        ));
    }
    let point = |scorer: &mut dyn ArmScorer, rng: &mut SimRng| {
        scorer.score(
            ScoreRequest {
                candidates,
                mode: ScoreMode::PointEstimate,
            },
            rng,
        )
    };
    match spec.kind {
        PolicyKind::Random => Ok((*candidates.choose(rng).expect("non-empty"), true)),
        PolicyKind::Greedy => {
            let scores = point(scorer, rng)?;
            Ok((argmax(candidates, &scores, rng), false))
        }
        PolicyKind::EpsilonGreedy | PolicyKind::DecayingEpsilon => {
            let eps = epsilon_schedule(spec, t);
            if rng.random::<f64>() < eps {
                Ok((*candidates.choose(rng).expect("non-empty"), true))
            } else {
                let scores = point(scorer, rng)?;
                Ok((argmax(candidates, &scores, rng), false))
            }
        }
        PolicyKind::ThompsonDropout => {
            let point_scores = point(scorer, rng)?;
            let mut sampled = vec![0.0; candidates.len()];
            for _ in 0..spec.posterior_samples {
                let draw = scorer.score(
                    ScoreRequest {
                        candidates,
                        mode: ScoreMode::PosteriorSample,
                    },
                    rng,
                )?;
                for (acc, d) in sampled.iter_mut().zip(draw) {
                    *acc += d;
                }
            }
            let s = spec.posterior_samples as f64;
            for v in &mut sampled {
                *v /= s;
            }
            let pick = argmax(candidates, &sampled, rng);
            let greedy_set = maximizers(&point_scores);
            let explored = !greedy_set.iter().any(|&p| candidates[p] == pick);
            Ok((pick, explored))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn decaying_schedule_values() {
        let spec = PolicySpec {
            kind: PolicyKind::DecayingEpsilon,
            epsilon0: 0.05,
            decay_scale: 100.0,
            posterior_samples: 1,
        };
        assert_eq!(epsilon_schedule(&spec, 1), 0.05 * 100.0 / 101.0);
        assert!((epsilon_schedule(&spec, 1) - 0.0495).abs() < 1e-4);
        assert!((epsilon_schedule(&spec, 900) - 0.005).abs() < 1e-15);
        assert!(epsilon_schedule(&spec, 1_000_000_000) < 1e-5);
        let zero = PolicySpec {
            epsilon0: 0.0,
            ..spec
        };
        assert!((1..1000).all(|t| epsilon_schedule(&zero, t) == 0.0));
    }

    #[test]
    fn zero_epsilon_is_greedy() {
        let spec = PolicySpec {
            kind: PolicyKind::EpsilonGreedy,
            epsilon0: 0.0,
            ..Default::default()
        };
        let scores = [0.2, 0.9, 0.1];
        let mut rng = stream(1, 0);
        for t in 1..200 {
            let (arm, explored) =
                choose_arm(&spec, &[0, 1, 2], &mut FixedScores(&scores), t, &mut rng).unwrap();
            assert_eq!((arm, explored), (1, false));
        }
    }

    #[test]
    fn empty_candidates_rejected() {
        let spec = PolicySpec::default();
        let err = choose_arm(&spec, &[], &mut FixedScores(&[1.0]), 1, &mut stream(0, 0));
        assert!(matches!(err, Err(BanditError::InvalidArgument(_))));
    }

    #[test]
    fn random_is_always_explored() {
        let spec = PolicySpec::of_kind(PolicyKind::Random);
        let mut rng = stream(2, 0);
        for _ in 0..100 {
            let (arm, explored) =
                choose_arm(&spec, &[3, 5], &mut FixedScores(&[0.0; 6]), 1, &mut rng).unwrap();
            assert!(arm == 3 || arm == 5);
            assert!(explored);
        }
    }

    #[test]
    fn ties_are_broken_across_all_maximizers() {
        let spec = PolicySpec::default();
        let scores = [1.0, 1.0, 0.0, 1.0];
        let mut seen = [false; 4];
        let mut rng = stream(3, 0);
        for _ in 0..200 {
            let (arm, _) =
                choose_arm(&spec, &[0, 1, 2, 3], &mut FixedScores(&scores), 1, &mut rng).unwrap();
            seen[arm] = true;
        }
        assert_eq!(seen, [true, true, false, true]);
    }

    #[test]
    fn validation_bounds() {
        let bad = PolicySpec {
            epsilon0: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = PolicySpec {
            decay_scale: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!("ucb".parse::<PolicyKind>().is_err());
    }
}
