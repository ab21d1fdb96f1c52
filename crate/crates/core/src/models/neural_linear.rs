use super::adam::{AdamConfig, AdamState};
use super::checkpoint::{restore_network, ParamBlock};
use super::linear::LinearModel;
use super::network::Network;
use super::neural::refit_network;
use super::{check_rows, ModelKind, PredictMode, RewardModel, TrainingSet};
use crate::error::{BanditError, Result};
use crate::rng::SimRng;

const FEATURE_CHUNK: usize = 256;

/// Ridge regression on the last hidden layer of a trained network.
///
/// A refit trains the whole network (output node included) on squared error,
/// starting from fresh weights unless warm starting is enabled, then
/// re-solves the linear head from scratch on the frozen trunk features.
/// Predictions come from the head only and are always deterministic.
#[derive(Debug, Clone)]
pub struct NeuralLinearModel {
    net: Network,
    adam: AdamState,
    batch_size: usize,
    warm_start: bool,
    head: LinearModel,
}

impl NeuralLinearModel {
    pub fn new(net: Network, adam: AdamConfig, batch_size: usize, ridge_lambda: f64) -> Self {
        let sizes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
        let head = LinearModel::new(net.feature_width(), ridge_lambda);
        Self {
            adam: AdamState::new(adam, &sizes),
            net,
            batch_size,
            warm_start: false,
            head,
        }
    }

    /// Keep trunk weights and optimizer moments between fits.
    pub fn set_warm_start(&mut self, on: bool) {
        self.warm_start = on;
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn head(&self) -> &LinearModel {
        &self.head
    }

    /// Last-hidden-layer activations for one context.
    pub fn extract_features(&self, context: &[f64]) -> Result<Vec<f64>> {
        if context.len() != self.net.input_len() {
            return Err(BanditError::DimensionMismatch {
                expected: self.net.input_len(),
                actual: context.len(),
            });
        }
        Ok(self.net.features(context)?.into_data())
    }

    /// Features for every pair in `data`, as a training set for the head.
    pub fn feature_set(&self, data: &TrainingSet) -> Result<TrainingSet> {
        let width = self.net.feature_width();
        let mut inputs = Vec::with_capacity(data.len() * width);
        let dim = data.dim();
        for chunk in data.inputs().chunks(FEATURE_CHUNK * dim) {
            inputs.extend_from_slice(self.net.features(chunk)?.data());
        }
        TrainingSet::from_pairs(width, inputs, data.targets().to_vec())
    }

    /// Re-solves the head on the current trunk's features.
    pub fn refit_head(&mut self, data: &TrainingSet) -> Result<()> {
        let features = self.feature_set(data)?;
        self.head.reset_statistics();
        for i in 0..features.len() {
            self.head.absorb(features.input(i), features.target(i));
        }
        self.head.solve()
    }
}

impl RewardModel for NeuralLinearModel {
    fn input_dim(&self) -> usize {
        self.net.input_len()
    }

    fn predict_rows(&self, rows: &[f64], _mode: PredictMode, rng: &mut SimRng) -> Result<Vec<f64>> {
        check_rows(rows, self.input_dim())?;
        let features = self.net.features(rows)?;
        self.head
            .predict_rows(features.data(), PredictMode::Point, rng)
    }

    fn fit(&mut self, data: &TrainingSet, epochs: usize, rng: &mut SimRng) -> Result<Vec<f64>> {
        let losses = refit_network(
            &mut self.net,
            &mut self.adam,
            self.warm_start,
            data,
            epochs,
            self.batch_size,
            rng,
        )?;
        self.refit_head(data)?;
        Ok(losses)
    }

    fn kind(&self) -> ModelKind {
        ModelKind::NeuralLinear
    }

    fn parameters(&self) -> Vec<ParamBlock> {
        let mut blocks = ParamBlock::from_network(&self.net);
        blocks.push(ParamBlock::vector(self.head.weights().to_vec()));
        blocks
    }

    fn load_parameters(&mut self, blocks: &[ParamBlock]) -> Result<()> {
        let (head, trunk) = blocks
            .split_last()
            .ok_or_else(|| BanditError::Checkpoint("empty parameter list".into()))?;
        restore_network(&mut self.net, trunk)?;
        if head.shape != [self.net.feature_width() + 1] {
            return Err(BanditError::Checkpoint(format!(
                "linear head block has shape {:?}, expected [{}]",
                head.shape,
                self.net.feature_width() + 1
            )));
        }
        self.head.weights_mut().copy_from_slice(&head.data);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::linear::cholesky_solve;
    use crate::rng::stream;
    use rand::Rng;

    fn model(hidden: usize) -> NeuralLinearModel {
        let net = Network::mlp(3, hidden, 0.0, &mut stream(1, 0));
        NeuralLinearModel::new(net, AdamConfig::default(), 16, 0.5)
    }

    fn data(count: usize) -> TrainingSet {
        let mut rng = stream(2, 0);
        let mut set = TrainingSet::new(3);
        for _ in 0..count {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            set.push(&x, x[0] * x[1] + x[2]).unwrap();
        }
        set
    }

    #[test]
    fn feature_length_is_hidden_width() {
        let m = model(12);
        assert_eq!(m.extract_features(&[0.1, 0.2, 0.3]).unwrap().len(), 12);
        assert!(m.extract_features(&[0.1]).is_err());
    }

    #[test]
    fn zero_trunk_gives_zero_features() {
        let mut m = model(6);
        for p in m.network_mut().params_mut() {
            p.fill(0.0);
        }
        let f = m.extract_features(&[0.4, -0.9, 2.0]).unwrap();
        assert!(f.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn head_is_ridge_on_extracted_features() {
        let mut m = model(8);
        let d = data(60);
        m.fit(&d, 3, &mut stream(4, 0)).unwrap();

        // Independent normal-equation solve on the same features.
        let width = 8;
        let p = width + 1;
        let mut a = vec![0.0; p * p];
        let mut b = vec![0.0; p];
        for i in 0..d.len() {
            let mut x = m.extract_features(d.input(i)).unwrap();
            x.push(1.0);
            for r in 0..p {
                b[r] += x[r] * d.target(i);
                for c in 0..p {
                    a[r * p + c] += x[r] * x[c];
                }
            }
        }
        for r in 0..p {
            a[r * p + r] += 0.5;
        }
        let w = cholesky_solve(&a, p, &b).unwrap();
        for (x, y) in w.iter().zip(m.head().weights()) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
    }

    #[test]
    fn predictions_ignore_dropout_mode() {
        let net = Network::mlp(3, 10, 0.5, &mut stream(1, 0));
        let m = NeuralLinearModel::new(net, AdamConfig::default(), 16, 1.0);
        let mut rng = stream(0, 0);
        let a = m
            .predict(&[0.1, 0.2, 0.3], PredictMode::DropoutSample, &mut rng)
            .unwrap();
        let b = m
            .predict(&[0.1, 0.2, 0.3], PredictMode::DropoutSample, &mut rng)
            .unwrap();
        assert_eq!(a, b);
        assert!(!m.has_posterior());
    }
}
