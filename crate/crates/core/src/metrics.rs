//! Cumulative reward and regret traces, and their comparison across seeds.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::bandit::{ExperimentConfig, RoundRecord};
use crate::config::{config_fingerprint, env_fingerprint};
use crate::error::{BanditError, Result};

pub const TRACE_HEADER: &str = "round,cum_reward,cum_regret,explored_count";
pub const TABLE_HEADER: &str =
    "policy,model,checkpoint,mean_regret,sd_regret,mean_reward,sd_reward";

/// Per-round cumulative series of one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentTrace {
    pub policy: String,
    pub model: String,
    pub config_fingerprint: String,
    pub env_fingerprint: String,
    pub cum_reward: Vec<f64>,
    pub cum_regret: Vec<f64>,
    /// Exploratory slots in each round (not cumulative).
    pub explored: Vec<usize>,
    pub wall_time_secs: f64,
}

/// Builds the cumulative series from round records, in order.
pub fn accumulate(records: &[RoundRecord]) -> Result<ExperimentTrace> {
    if records.is_empty() {
        return Err(BanditError::InvalidArgument(
            "cannot accumulate an empty record sequence".into(),
        ));
    }
    let mut trace = ExperimentTrace::default();
    let (mut reward, mut regret) = (0.0, 0.0);
    for r in records {
        reward += r.observed_reward();
        regret += r.regret();
        trace.cum_reward.push(reward);
        trace.cum_regret.push(regret);
        trace.explored.push(r.slate.explored_count());
    }
    Ok(trace)
}

impl ExperimentTrace {
    pub fn len(&self) -> usize {
        self.cum_regret.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cum_regret.is_empty()
    }

    pub fn final_regret(&self) -> f64 {
        self.cum_regret.last().copied().unwrap_or(0.0)
    }

    pub fn final_reward(&self) -> f64 {
        self.cum_reward.last().copied().unwrap_or(0.0)
    }

    /// Sets the policy/model labels and both fingerprints from `config`.
    pub fn label_with(&mut self, config: &ExperimentConfig) {
        self.policy = config.policy.kind.as_str().to_string();
        self.model = config.model.kind.as_str().to_string();
        self.config_fingerprint = config_fingerprint(config);
        self.env_fingerprint = env_fingerprint(config);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(32 * (self.len() + 1));
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                i + 1,
                format_sig9(self.cum_reward[i]),
                format_sig9(self.cum_regret[i]),
                self.explored[i]
            );
        }
        out
    }

    /// Parses trace CSV text. Labels and fingerprints are left empty.
    pub fn from_csv(text: &str, source: &str) -> Result<Self> {
        let err = |line: usize, message: String| BanditError::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == TRACE_HEADER => {}
            _ => return Err(err(1, format!("expected header {TRACE_HEADER:?}"))),
        }
        let mut trace = ExperimentTrace::default();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(err(
                    i + 1,
                    format!("expected 4 fields, found {}", fields.len()),
                ));
            }
            let round: usize = fields[0]
                .parse()
                .map_err(|_| err(i + 1, format!("bad round {:?}", fields[0])))?;
            if round != trace.len() + 1 {
                return Err(err(
                    i + 1,
                    format!("expected round {}, found {round}", trace.len() + 1),
                ));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| err(i + 1, format!("bad number {s:?}")))
            };
            trace.cum_reward.push(num(fields[1])?);
            trace.cum_regret.push(num(fields[2])?);
            trace.explored.push(
                fields[3]
                    .parse()
                    .map_err(|_| err(i + 1, format!("bad count {:?}", fields[3])))?,
            );
        }
        if trace.is_empty() {
            return Err(err(1, "trace has no rows".into()));
        }
        Ok(trace)
    }
}

/// Formats like C's `%.9g`: nine significant digits, trailing zeros dropped,
/// exponent form outside `1e-4 <= |v| < 1e9`.
pub fn format_sig9(v: f64) -> String {
    const DIGITS: i32 = 9;
    if v == 0.0 {
        return if v.is_sign_negative() { "-0" } else { "0" }.to_string();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..DIGITS).contains(&exp) {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (DIGITS - 1 - exp) as usize;
        strip_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub policy: String,
    pub model: String,
    /// 1-based round index.
    pub checkpoint: usize,
    pub mean_regret: f64,
    pub sd_regret: f64,
    pub mean_reward: f64,
    pub sd_reward: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub checkpoints: Vec<usize>,
    pub rows: Vec<ComparisonRow>,
    /// `(policy, model)` cells ordered by final mean regret, best first.
    pub ranking: Vec<(String, String, f64)>,
}

/// Rounds T/4, T/2 and T (1-based, deduplicated for tiny horizons).
pub fn checkpoints(horizon: usize) -> Vec<usize> {
    let mut c: Vec<usize> = [horizon / 4, horizon / 2, horizon]
        .into_iter()
        .map(|r| r.max(1))
        .collect();
    c.dedup();
    c
}

/// Groups traces by `(policy, model)` and summarizes them at the checkpoints.
pub fn compare(traces: &[ExperimentTrace]) -> Result<ComparisonTable> {
    let first = traces
        .first()
        .ok_or_else(|| BanditError::InvalidArgument("no traces to compare".into()))?;
    for t in traces {
        if t.env_fingerprint != first.env_fingerprint {
            return Err(BanditError::IncompatibleTraces(format!(
                "{}/{} ran in environment {} but {}/{} in {}",
                t.policy,
                t.model,
                short(&t.env_fingerprint),
                first.policy,
                first.model,
                short(&first.env_fingerprint)
            )));
        }
        if t.len() != first.len() {
            return Err(BanditError::IncompatibleTraces(format!(
                "horizons differ: {} vs {}",
                t.len(),
                first.len()
            )));
        }
    }
    let mut groups: BTreeMap<(&str, &str), Vec<&ExperimentTrace>> = BTreeMap::new();
    for t in traces {
        groups
            .entry((t.policy.as_str(), t.model.as_str()))
            .or_default()
            .push(t);
    }
    let cps = checkpoints(first.len());
    let mut rows = Vec::new();
    let mut ranking = Vec::new();
    for ((policy, model), members) in &groups {
        for &c in &cps {
            let regrets: Vec<f64> = members.iter().map(|t| t.cum_regret[c - 1]).collect();
            let rewards: Vec<f64> = members.iter().map(|t| t.cum_reward[c - 1]).collect();
            let (mean_regret, sd_regret) = mean_sd(&regrets);
            let (mean_reward, sd_reward) = mean_sd(&rewards);
            rows.push(ComparisonRow {
                policy: policy.to_string(),
                model: model.to_string(),
                checkpoint: c,
                mean_regret,
                sd_regret,
                mean_reward,
                sd_reward,
                runs: members.len(),
            });
        }
        let finals: Vec<f64> = members.iter().map(|t| t.final_regret()).collect();
        ranking.push((policy.to_string(), model.to_string(), mean_sd(&finals).0));
    }
    ranking.sort_by(|a, b| a.2.total_cmp(&b.2));
    Ok(ComparisonTable {
        checkpoints: cps,
        rows,
        ranking,
    })
}

fn short(fingerprint: &str) -> &str {
    &fingerprint[..fingerprint.len().min(12)]
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(TABLE_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.policy,
                r.model,
                r.checkpoint,
                format_sig9(r.mean_regret),
                format_sig9(r.sd_regret),
                format_sig9(r.mean_reward),
                format_sig9(r.sd_reward)
            );
        }
        out
    }

    pub fn row(&self, policy: &str, model: &str, checkpoint: usize) -> Option<&ComparisonRow> {
        self.rows
            .iter()
            .find(|r| r.policy == policy && r.model == model && r.checkpoint == checkpoint)
    }

    /// Final mean cumulative regret of one cell.
    pub fn final_mean_regret(&self, policy: &str, model: &str) -> Option<f64> {
        self.ranking
            .iter()
            .find(|(p, m, _)| p == policy && m == model)
            .map(|r| r.2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::{ContextMatrix, Slate};

    fn record(picks: Vec<usize>, rewards: Vec<f64>, means: Vec<f64>, oracle: f64) -> RoundRecord {
        let n = means.len();
        RoundRecord {
            contexts: ContextMatrix::from_flat(n, 1, vec![0.0; n], 1).unwrap(),
            slate: Slate {
                scores: vec![0.0; picks.len()],
                explored: vec![false; picks.len()],
                picks,
            },
            observed_rewards: rewards,
            true_means: means,
            oracle_value: oracle,
        }
    }

    fn trace(policy: &str, regret: &[f64], env: &str) -> ExperimentTrace {
        ExperimentTrace {
            policy: policy.into(),
            model: "mlp".into(),
            env_fingerprint: env.into(),
            cum_reward: regret.iter().map(|r| 10.0 - r).collect(),
            cum_regret: regret.to_vec(),
            explored: vec![0; regret.len()],
            ..Default::default()
        }
    }

    #[test]
    fn single_round_reward_sum() {
        let r = record(
            vec![0, 1, 2],
            vec![1.0, 0.0, 1.0],
            vec![1.0, 0.0, 1.0, 1.0],
            3.0,
        );
        let t = accumulate(&[r]).unwrap();
        assert_eq!(t.cum_reward, vec![2.0]);
        assert_eq!(t.cum_regret, vec![1.0]);
    }

    #[test]
    fn oracle_picks_give_zero_regret() {
        let recs: Vec<_> = (0..5)
            .map(|_| record(vec![1, 0], vec![0.3, 0.2], vec![0.2, 0.3, 0.1], 0.5))
            .collect();
        assert!(accumulate(&recs)
            .unwrap()
            .cum_regret
            .iter()
            .all(|r| *r == 0.0));
        assert!(accumulate(&[]).is_err());
    }

    #[test]
    fn sig9_matches_printf() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (2.5, "2.5"),
            (1.0 / 3.0, "0.333333333"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (-7.25, "-7.25"),
            (99999999.95, "100000000"),
            (999999999.5, "1e+09"),
        ];
        for (v, s) in cases {
            assert_eq!(format_sig9(v), s, "{v}");
        }
    }

    #[test]
    fn csv_round_trip() {
        let t = trace("random", &[0.5, 1.25, 2.0], "e");
        let back = ExperimentTrace::from_csv(&t.to_csv(), "x").unwrap();
        assert_eq!(back.cum_regret, t.cum_regret);
        assert_eq!(back.cum_reward, t.cum_reward);
        assert!(ExperimentTrace::from_csv("round,x\n", "x").is_err());
        assert!(ExperimentTrace::from_csv(&format!("{TRACE_HEADER}\n2,1,1,0\n"), "x").is_err());
    }

    #[test]
    fn single_seed_has_zero_sd() {
        let table = compare(&[trace("random", &[1.0, 2.0, 3.0, 4.0], "e")]).unwrap();
        assert_eq!(table.checkpoints, vec![1, 2, 4]);
        assert!(table
            .rows
            .iter()
            .all(|r| r.sd_regret == 0.0 && r.sd_reward == 0.0));
    }

    #[test]
    fn oracle_ranks_first_random_last() {
        let traces = vec![
            trace("random", &[1.0, 2.0, 3.0, 4.0], "e"),
            trace("oracle", &[0.0; 4], "e"),
            trace("greedy", &[0.5, 0.7, 0.8, 0.9], "e"),
        ];
        let table = compare(&traces).unwrap();
        assert_eq!(table.ranking.first().unwrap().0, "oracle");
        assert_eq!(table.ranking.last().unwrap().0, "random");
    }

    #[test]
    fn permutation_invariant() {
        let mut traces = vec![
            trace("random", &[1.0, 2.0, 3.0, 4.0], "e"),
            trace("random", &[1.5, 2.0, 3.5, 5.0], "e"),
            trace("greedy", &[0.5, 0.7, 0.8, 0.9], "e"),
        ];
        let a = compare(&traces).unwrap().to_csv();
        traces.reverse();
        assert_eq!(a, compare(&traces).unwrap().to_csv());
    }

    #[test]
    fn mismatched_environment_rejected() {
        let traces = vec![trace("random", &[1.0], "a"), trace("greedy", &[0.0], "b")];
        assert!(matches!(
            compare(&traces),
            Err(BanditError::IncompatibleTraces(_))
        ));
    }

    #[test]
    fn sample_sd() {
        let (m, s) = mean_sd(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
    }
}
