use rand::seq::SliceRandom;

use super::adam::{AdamConfig, AdamState};
use super::checkpoint::{restore_network, ParamBlock};
use super::network::Network;
use super::{check_rows, ModelKind, PredictMode, RewardModel, TrainingSet};
use crate::error::{BanditError, Result};
use crate::rng::SimRng;

/// Perceptron or convolutional reward network trained with Adam on squared error.
///
/// Unless warm starting is enabled, every fit redraws the weights and clears
/// the optimizer before training, so the result depends only on the pairs,
/// the epoch count and the generator.
#[derive(Debug, Clone)]
pub struct NeuralModel {
    kind: ModelKind,
    net: Network,
    adam: AdamState,
    batch_size: usize,
    warm_start: bool,
}

impl NeuralModel {
    pub fn new(kind: ModelKind, net: Network, adam: AdamConfig, batch_size: usize) -> Self {
        let sizes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
        Self {
            kind,
            adam: AdamState::new(adam, &sizes),
            net,
            batch_size,
            warm_start: false,
        }
    }

    /// Keep weights and optimizer moments between fits.
    pub fn set_warm_start(&mut self, on: bool) {
        self.warm_start = on;
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }
}

/// Mini-batch Adam epochs over `data`, reshuffled every epoch. Dropout is
/// active during training whenever the network has a nonzero rate.
pub(crate) fn refit_network(
    net: &mut Network,
    adam: &mut AdamState,
    warm_start: bool,
    data: &TrainingSet,
    epochs: usize,
    batch_size: usize,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    if !warm_start {
        net.reinitialize(rng);
        adam.reset();
    }
    train_epochs(net, adam, data, epochs, batch_size, rng)
}

pub(crate) fn train_epochs(
    net: &mut Network,
    adam: &mut AdamState,
    data: &TrainingSet,
    epochs: usize,
    batch_size: usize,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(BanditError::InvalidArgument(
            "fit needs at least one training pair".into(),
        ));
    }
    if epochs == 0 {
        return Err(BanditError::InvalidArgument("epochs must be >= 1".into()));
    }
    if data.dim() != net.input_len() {
        return Err(BanditError::DimensionMismatch {
            expected: net.input_len(),
            actual: data.dim(),
        });
    }
    let stochastic = net.has_dropout();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = Vec::with_capacity(epochs);
    let mut rows = Vec::with_capacity(batch_size * data.dim());
    let mut targets = Vec::with_capacity(batch_size);
    for epoch in 0..epochs {
        order.shuffle(rng);
        let mut sse = 0.0;
        for chunk in order.chunks(batch_size) {
            rows.clear();
            targets.clear();
            for &i in chunk {
                rows.extend_from_slice(data.input(i));
                targets.push(data.target(i));
            }
            let dropout_rng = if stochastic { Some(&mut *rng) } else { None };
            let (batch_sse, grads) = net.loss_and_grads(&rows, &targets, dropout_rng)?;
            if !batch_sse.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(BanditError::DivergedTraining { epoch });
            }
            sse += batch_sse;
            adam.update(&mut net.params_mut(), &grads);
        }
        let mean = sse / data.len() as f64;
        if !mean.is_finite() {
            return Err(BanditError::DivergedTraining { epoch });
        }
        losses.push(mean);
    }
    Ok(losses)
}

impl RewardModel for NeuralModel {
    fn input_dim(&self) -> usize {
        self.net.input_len()
    }

    fn predict_rows(&self, rows: &[f64], mode: PredictMode, rng: &mut SimRng) -> Result<Vec<f64>> {
        check_rows(rows, self.input_dim())?;
        let rng = match mode {
            PredictMode::Point => None,
            PredictMode::DropoutSample => Some(rng),
        };
        self.net.forward(rows, rng)
    }

    fn fit(&mut self, data: &TrainingSet, epochs: usize, rng: &mut SimRng) -> Result<Vec<f64>> {
        refit_network(
            &mut self.net,
            &mut self.adam,
            self.warm_start,
            data,
            epochs,
            self.batch_size,
            rng,
        )
    }

    fn has_posterior(&self) -> bool {
        self.net.has_dropout()
    }

    fn kind(&self) -> ModelKind {
        self.kind
    }

    fn parameters(&self) -> Vec<ParamBlock> {
        ParamBlock::from_network(&self.net)
    }

    fn load_parameters(&mut self, blocks: &[ParamBlock]) -> Result<()> {
        restore_network(&mut self.net, blocks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn model(dropout: f64, seed: u64) -> NeuralModel {
        let mut rng = stream(seed, 0);
        NeuralModel::new(
            ModelKind::Mlp,
            Network::mlp(2, 100, dropout, &mut rng),
            AdamConfig::default(),
            64,
        )
    }

    fn relu_square_pairs(count: usize, seed: u64) -> TrainingSet {
        let mut rng = stream(seed, 9);
        let mut set = TrainingSet::new(2);
        for _ in 0..count {
            let x1: f64 = rng.random_range(-1.0..1.0);
            let x2: f64 = rng.random_range(-1.0..1.0);
            set.push(&[x1, x2], x1.max(0.0) + x2 * x2).unwrap();
        }
        set
    }

    #[test]
    fn zero_dropout_samples_are_deterministic() {
        let m = model(0.0, 1);
        let mut rng = stream(5, 5);
        let a = m
            .predict(&[0.3, -0.2], PredictMode::DropoutSample, &mut rng)
            .unwrap();
        let b = m
            .predict(&[0.3, -0.2], PredictMode::DropoutSample, &mut rng)
            .unwrap();
        assert_eq!(a, b);
        assert!(!m.has_posterior());
    }

    #[test]
    fn training_reduces_loss_on_smooth_target() {
        for seed in 0..5 {
            let mut m = model(0.0, seed);
            let data = relu_square_pairs(200, seed);
            let losses = m.fit(&data, 16, &mut stream(seed, 1)).unwrap();
            assert_eq!(losses.len(), 16);
            assert!(losses.iter().all(|l| l.is_finite()));
            assert!(
                losses[15] < losses[0],
                "seed {seed}: first {} last {}",
                losses[0],
                losses[15]
            );
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let data = relu_square_pairs(50, 3);
        let mut a = model(0.1, 7);
        let mut b = model(0.1, 7);
        a.fit(&data, 3, &mut stream(11, 0)).unwrap();
        b.fit(&data, 3, &mut stream(11, 0)).unwrap();
        assert_eq!(a.network().params(), b.network().params());
    }

    #[test]
    fn full_batch_loss_ignores_pair_order() {
        let data = relu_square_pairs(40, 4);
        let mut rev = TrainingSet::new(2);
        for i in (0..data.len()).rev() {
            rev.push(data.input(i), data.target(i)).unwrap();
        }
        let mut a = model(0.0, 2);
        let mut b = model(0.0, 2);
        a.batch_size = 64;
        b.batch_size = 64;
        let la = a.fit(&data, 4, &mut stream(1, 1)).unwrap();
        let lb = b.fit(&rev, 4, &mut stream(1, 1)).unwrap();
        for (x, y) in la.iter().zip(&lb) {
            assert!((x - y).abs() < 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn fit_rejects_empty_data() {
        let mut m = model(0.0, 0);
        assert!(m.fit(&TrainingSet::new(2), 1, &mut stream(0, 0)).is_err());
    }

    #[test]
    fn diverging_training_reports_epoch() {
        let mut m = model(0.0, 0);
        let mut data = TrainingSet::new(2);
        data.push(&[1.0, 1.0], f64::INFINITY).unwrap();
        match m.fit(&data, 2, &mut stream(0, 0)) {
            Err(BanditError::DivergedTraining { epoch }) => assert_eq!(epoch, 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
