use rand::Rng;

use super::{EnvKind, Environment, RoundDraw};
use crate::bandit::ContextMatrix;
use crate::error::{BanditError, Result};
use crate::rng::SimRng;

/// Linear rewards `w·x` over contexts uniform in `[-1, 1]^d`.
#[derive(Debug, Clone)]
pub struct SyntheticLinearEnv {
    weights: Vec<f64>,
    n: usize,
    noise_scale: f64,
}

impl SyntheticLinearEnv {
    /// Draws the hidden weights uniformly from `[-1, 1]^dim`.
    pub fn new(dim: usize, n: usize, noise_scale: f64, rng: &mut SimRng) -> Result<Self> {
        let weights = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        Self::with_weights(weights, n, noise_scale)
    }

    pub fn with_weights(weights: Vec<f64>, n: usize, noise_scale: f64) -> Result<Self> {
        if weights.is_empty() || n == 0 {
            return Err(BanditError::InvalidConfig(
                "synthetic environment needs dim >= 1 and n >= 1".into(),
            ));
        }
        Ok(Self {
            weights,
            n,
            noise_scale,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn true_mean(&self, context: &[f64]) -> f64 {
        context.iter().zip(&self.weights).map(|(x, w)| x * w).sum()
    }
}

impl Environment for SyntheticLinearEnv {
    fn kind(&self) -> EnvKind {
        EnvKind::Synthetic
    }

    fn arm_count(&self) -> usize {
        self.n
    }

    fn context_dim(&self) -> usize {
        self.weights.len()
    }

    fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    fn draw_round(&mut self, t: usize, rng: &mut SimRng) -> Result<RoundDraw> {
        let d = self.weights.len();
        let data: Vec<f64> = (0..self.n * d)
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
        let means = data.chunks(d).map(|x| self.true_mean(x)).collect();
        RoundDraw::new(
            ContextMatrix::from_flat(self.n, d, data, t)?,
            means,
            self.noise_scale,
        )
    }
}
