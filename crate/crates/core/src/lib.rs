//! Top-K contextual bandit simulation.
//!
//! Each round an [`environments::Environment`] shows `n` arms, a
//! [`models::RewardModel`] scores them, and a [`policies::PolicySpec`] fills a
//! slate of `K` arms by successive exclusion. [`bandit::run_experiment`] plays
//! a whole horizon and returns the cumulative reward and regret series that
//! [`metrics`] compares across seeds and configurations.

pub mod bandit;
pub mod chart;
pub mod config;
pub mod environments;
pub mod error;
pub mod metrics;
pub mod models;
pub mod policies;
pub mod rng;
pub mod verify;

pub use bandit::{
    run_experiment, run_round, select_top_k, select_top_k_scores, ContextMatrix, Experiment,
    ExperimentConfig, History, RoundRecord, Slate,
};
pub use error::{BanditError, Result};
pub use metrics::{accumulate, compare, ComparisonTable, ExperimentTrace};
