/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
        }
    }
}

/// First/second moment buffers, one per parameter block, plus the step count.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, block_sizes: &[usize]) -> Self {
        Self {
            config,
            first: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    /// Zeroes the moments and the step count.
    pub fn reset(&mut self) {
        for m in self.first.iter_mut().chain(self.second.iter_mut()) {
            m.fill(0.0);
        }
        self.step = 0;
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update of `params` along `grads`.
    pub fn update(&mut self, params: &mut [&mut Vec<f64>], grads: &[Vec<f64>]) {
        debug_assert_eq!(params.len(), self.first.len());
        debug_assert_eq!(grads.len(), self.first.len());
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps_hat,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 / (1.0 - beta1.powi(t));
        let c2 = 1.0 / (1.0 - beta2.powi(t));
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            debug_assert_eq!(p.len(), g.len());
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] * c1;
                let v_hat = v[i] * c2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + eps_hat);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With bias correction the first step is lr * g / (|g| + eps).
        let mut w = vec![1.0, -1.0];
        let mut adam = AdamState::new(AdamConfig::default(), &[2]);
        adam.update(&mut [&mut w], &[vec![0.5, -2.0]]);
        assert!((w[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((w[1] - (-1.0 + 1e-3)).abs() < 1e-9);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut w = vec![3.0];
        let mut adam = AdamState::new(
            AdamConfig {
                learning_rate: 0.05,
                ..Default::default()
            },
            &[1],
        );
        for _ in 0..2000 {
            let g = vec![2.0 * (w[0] - 1.0)];
            adam.update(&mut [&mut w], &[g]);
        }
        assert!((w[0] - 1.0).abs() < 1e-3);
    }
}
