//! The round loop: score arms, fill the slate by successive exclusion,
//! observe rewards, record history, retrain, and account regret.

use crate::environments::{oracle_top_k, DataPools, EnvSpec, Environment};
use crate::error::{BanditError, Result};
use crate::metrics::{accumulate, ExperimentTrace};
use crate::models::{ModelSpec, PredictMode, RewardModel, TrainingSet};
use crate::policies::{choose_arm, ArmScorer, FixedScores, PolicySpec, ScoreMode, ScoreRequest};
use crate::rng::{RunStreams, SimRng};

/// The `n` per-arm contexts observed at one round, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextMatrix {
    n: usize,
    dim: usize,
    data: Vec<f64>,
    round_index: usize,
}

impl ContextMatrix {
    pub fn from_flat(n: usize, dim: usize, data: Vec<f64>, round_index: usize) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(BanditError::InvalidArgument(
                "context matrix needs n >= 1 and d >= 1".into(),
            ));
        }
        if data.len() != n * dim {
            return Err(BanditError::DimensionMismatch {
                expected: n * dim,
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(BanditError::Numeric(format!(
                "non-finite context entry at arm {}",
                i / dim
            )));
        }
        Ok(Self {
            n,
            dim,
            data,
            round_index,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], round_index: usize) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(BanditError::DimensionMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        Self::from_flat(rows.len(), dim, rows.concat(), round_index)
    }

    pub fn arm_count(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn round_index(&self) -> usize {
        self.round_index
    }

    pub fn row(&self, arm: usize) -> &[f64] {
        &self.data[arm * self.dim..(arm + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

/// The ordered arms chosen in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct Slate {
    pub picks: Vec<usize>,
    /// Point estimate of each pick when it was selected.
    pub scores: Vec<f64>,
    pub explored: Vec<bool>,
}

impl Slate {
    pub fn len(&self) -> usize {
        self.picks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.picks.is_empty()
    }

    pub fn explored_count(&self) -> usize {
        self.explored.iter().filter(|e| **e).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub contexts: ContextMatrix,
    pub slate: Slate,
    /// Noisy rewards, aligned with `slate.picks`.
    pub observed_rewards: Vec<f64>,
    pub true_means: Vec<f64>,
    /// Sum of the K largest true means.
    pub oracle_value: f64,
}

impl RoundRecord {
    pub fn round_index(&self) -> usize {
        self.contexts.round_index()
    }

    /// Sum of the true means of the picked arms.
    pub fn expected_reward(&self) -> f64 {
        self.slate.picks.iter().map(|&i| self.true_means[i]).sum()
    }

    pub fn observed_reward(&self) -> f64 {
        self.observed_rewards.iter().sum()
    }

    /// `oracle_value` minus the expected reward; never negative.
    pub fn regret(&self) -> f64 {
        (self.oracle_value - self.expected_reward()).max(0.0)
    }
}

/// Round records plus the flattened training pairs of every picked slot.
#[derive(Debug, Clone)]
pub struct History {
    records: Vec<RoundRecord>,
    training: TrainingSet,
}

impl History {
    pub fn new(context_dim: usize) -> Self {
        Self {
            records: Vec::new(),
            training: TrainingSet::new(context_dim),
        }
    }

    /// Appends a record and its `(context, observed reward)` pairs.
    pub fn push(&mut self, record: RoundRecord) -> Result<&RoundRecord> {
        for (&arm, &reward) in record.slate.picks.iter().zip(&record.observed_rewards) {
            self.training.push(record.contexts.row(arm), reward)?;
        }
        self.records.push(record);
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    pub fn training(&self) -> &TrainingSet {
        &self.training
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub model: ModelSpec,
    pub policy: PolicySpec,
    pub horizon: usize,
    pub seed: u64,
    pub retrain_every: usize,
    pub epochs_per_fit: usize,
}

impl ExperimentConfig {
    pub fn new(env: EnvSpec, model: ModelSpec, policy: PolicySpec) -> Self {
        Self {
            env,
            model,
            policy,
            horizon: 1000,
            seed: 0,
            retrain_every: 1,
            epochs_per_fit: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.model.validate()?;
        self.policy.validate()?;
        if self.horizon == 0 {
            return Err(BanditError::InvalidConfig(
                "run.horizon must be >= 1".into(),
            ));
        }
        if self.retrain_every == 0 {
            return Err(BanditError::InvalidConfig(
                "run.retrain_every must be >= 1".into(),
            ));
        }
        if self.epochs_per_fit == 0 {
            return Err(BanditError::InvalidConfig(
                "run.epochs_per_fit must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Rejects non-finite scores on behalf of the wrapped scorer.
struct Checked<'a>(&'a mut dyn ArmScorer);

impl ArmScorer for Checked<'_> {
    fn arm_count(&self) -> usize {
        self.0.arm_count()
    }

    fn score(&mut self, request: ScoreRequest<'_>, rng: &mut SimRng) -> Result<Vec<f64>> {
        let scores = self.0.score(request, rng)?;
        if scores.len() != request.candidates.len() {
            return Err(BanditError::DimensionMismatch {
                expected: request.candidates.len(),
                actual: scores.len(),
            });
        }
        if let Some((&arm, &value)) = request
            .candidates
            .iter()
            .zip(&scores)
            .find(|(_, s)| !s.is_finite())
        {
            return Err(BanditError::NonFiniteScore { arm, value });
        }
        Ok(scores)
    }
}

/// Fills a slate of `k` arms slot by slot, removing each pick from the
/// candidate set before the next slot.
pub fn select_top_k(
    scorer: &mut dyn ArmScorer,
    k: usize,
    policy: &PolicySpec,
    t: usize,
    rng: &mut SimRng,
) -> Result<Slate> {
    let n = scorer.arm_count();
    if k > n {
        return Err(BanditError::InvalidConfig(format!(
            "K ≤ n required (K = {k}, n = {n})"
        )));
    }
    let mut scorer = Checked(scorer);
    let mut remaining: Vec<usize> = (0..n).collect();
    let point = scorer.score(
        ScoreRequest {
            candidates: &remaining,
            mode: ScoreMode::PointEstimate,
        },
        rng,
    )?;
    let mut slate = Slate {
        picks: Vec::with_capacity(k),
        scores: Vec::with_capacity(k),
        explored: Vec::with_capacity(k),
    };
    for _ in 0..k {
        let (pick, explored) = choose_arm(policy, &remaining, &mut scorer, t, rng)?;
        let pos = remaining
            .iter()
            .position(|&i| i == pick)
            .expect("policy picks from the candidates");
        remaining.remove(pos);
        slate.picks.push(pick);
        slate.scores.push(point[pick]);
        slate.explored.push(explored);
    }
    Ok(slate)
}

/// [`select_top_k`] over a fixed score vector.
pub fn select_top_k_scores(
    scores: &[f64],
    k: usize,
    policy: &PolicySpec,
    t: usize,
    rng: &mut SimRng,
) -> Result<Slate> {
    select_top_k(&mut FixedScores(scores), k, policy, t, rng)
}

/// Scores one round's contexts with a model. Point estimates are computed
/// once per round; posterior draws are fresh on every request.
struct ModelScorer<'a> {
    model: &'a dyn RewardModel,
    contexts: &'a ContextMatrix,
    point: Option<Vec<f64>>,
}

impl ArmScorer for ModelScorer<'_> {
    fn arm_count(&self) -> usize {
        self.contexts.arm_count()
    }

    fn score(&mut self, request: ScoreRequest<'_>, rng: &mut SimRng) -> Result<Vec<f64>> {
        match request.mode {
            ScoreMode::PointEstimate => {
                if self.point.is_none() {
                    self.point = Some(self.model.predict_rows(
                        self.contexts.as_flat(),
                        PredictMode::Point,
                        rng,
                    )?);
                }
                let point = self.point.as_ref().expect("cached");
                Ok(request.candidates.iter().map(|&i| point[i]).collect())
            }
            ScoreMode::PosteriorSample => {
                let mut rows = Vec::with_capacity(request.candidates.len() * self.contexts.dim());
                for &i in request.candidates {
                    rows.extend_from_slice(self.contexts.row(i));
                }
                self.model
                    .predict_rows(&rows, PredictMode::DropoutSample, rng)
            }
        }
    }
}

/// Plays round `t` and appends it to `history`. Environment draws and reward
/// noise come from `streams.env`; selection randomness from `streams.policy`.
pub fn run_round<'h>(
    env: &mut dyn Environment,
    model: &dyn RewardModel,
    policy: &PolicySpec,
    k: usize,
    history: &'h mut History,
    t: usize,
    streams: &mut RunStreams,
) -> Result<&'h RoundRecord> {
    if model.input_dim() != env.context_dim() {
        return Err(BanditError::InvalidConfig(format!(
            "model input dimension {} does not match context dimension {}",
            model.input_dim(),
            env.context_dim()
        )));
    }
    let draw = env.draw_round(t, &mut streams.env)?;
    let slate = {
        let mut scorer = ModelScorer {
            model,
            contexts: &draw.contexts,
            point: None,
        };
        select_top_k(&mut scorer, k, policy, t, &mut streams.policy)?
    };
    let observed_rewards = slate
        .picks
        .iter()
        .map(|&arm| draw.observe(arm, &mut streams.env))
        .collect();
    let (_, oracle_value) = oracle_top_k(&draw.true_means, k)?;
    history.push(RoundRecord {
        contexts: draw.contexts,
        slate,
        observed_rewards,
        true_means: draw.true_means,
        oracle_value,
    })
}

/// A run in progress. [`Experiment::step`] plays one round at a time.
pub struct Experiment {
    config: ExperimentConfig,
    env: Box<dyn Environment>,
    model: Box<dyn RewardModel>,
    history: History,
    streams: RunStreams,
    fits: usize,
}

impl Experiment {
    pub fn new(config: ExperimentConfig, pools: &DataPools) -> Result<Self> {
        config.validate()?;
        let mut streams = RunStreams::new(config.seed);
        let env = config.env.build(pools, &mut streams.init)?;
        let model = config
            .model
            .build(env.context_dim(), env.image_side(), &mut streams.init)?;
        Ok(Self::with_parts(config, env, model, streams))
    }

    /// Assembles a run from an already-built environment and model.
    pub fn with_parts(
        config: ExperimentConfig,
        env: Box<dyn Environment>,
        model: Box<dyn RewardModel>,
        streams: RunStreams,
    ) -> Self {
        let history = History::new(env.context_dim());
        Self {
            config,
            env,
            model,
            history,
            streams,
            fits: 0,
        }
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn model(&self) -> &dyn RewardModel {
        self.model.as_ref()
    }

    pub fn environment(&self) -> &dyn Environment {
        self.env.as_ref()
    }

    /// Completed rounds.
    pub fn rounds_played(&self) -> usize {
        self.history.len()
    }

    pub fn fit_count(&self) -> usize {
        self.fits
    }

    pub fn is_finished(&self) -> bool {
        self.history.len() >= self.config.horizon
    }

    /// Plays the next round, then refits when the round index is a multiple
    /// of `retrain_every`.
    pub fn step(&mut self) -> Result<&RoundRecord> {
        let t = self.history.len() + 1;
        run_round(
            self.env.as_mut(),
            self.model.as_ref(),
            &self.config.policy,
            self.config.env.k,
            &mut self.history,
            t,
            &mut self.streams,
        )
        .map_err(|e| e.at_round(t))?;
        if t.is_multiple_of(self.config.retrain_every) {
            self.model
                .fit(
                    self.history.training(),
                    self.config.epochs_per_fit,
                    &mut self.streams.train,
                )
                .map_err(|e| e.at_round(t))?;
            self.fits += 1;
        }
        Ok(self.history.records().last().expect("round recorded"))
    }

    /// Plays the remaining rounds and returns the trace.
    pub fn run(mut self) -> Result<ExperimentTrace> {
        let clock = Clock::start();
        while !self.is_finished() {
            self.step()?;
        }
        let mut trace = self.trace()?;
        trace.wall_time_secs = clock.elapsed();
        Ok(trace)
    }

    /// Trace of the rounds played so far, labelled with this config.
    pub fn trace(&self) -> Result<ExperimentTrace> {
        let mut trace = accumulate(self.history.records())?;
        trace.label_with(&self.config);
        Ok(trace)
    }
}

pub fn run_experiment(config: &ExperimentConfig, pools: &DataPools) -> Result<ExperimentTrace> {
    Experiment::new(config.clone(), pools)?.run()
}

#[cfg(not(target_arch = "wasm32"))]
struct Clock(std::time::Instant);

#[cfg(not(target_arch = "wasm32"))]
impl Clock {
    fn start() -> Self {
        Clock(std::time::Instant::now())
    }

    fn elapsed(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[cfg(target_arch = "wasm32")]
struct Clock;

#[cfg(target_arch = "wasm32")]
impl Clock {
    fn start() -> Self {
        Clock
    }

    fn elapsed(&self) -> f64 {
        0.0
    }
}
