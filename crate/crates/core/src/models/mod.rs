//! Trainable reward estimators.
//!
//! All four model families implement [`RewardModel`]: ridge [`LinearModel`],
//! the [`NeuralModel`] perceptron and convolutional variants, and
//! [`NeuralLinearModel`], which solves a ridge head on the last hidden layer
//! of a trained network. The networks run on the small hand-written engine in
//! [`layers`] and [`network`], trained with [`AdamState`].

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod linear;
pub mod network;
pub mod neural;
pub mod neural_linear;
pub mod tensor;

use std::fmt;
use std::str::FromStr;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::ParamBlock;
pub use gradcheck::{gradient_check, Differentiable, GradientReport};
pub use linear::LinearModel;
pub use network::Network;
pub use neural::NeuralModel;
pub use neural_linear::NeuralLinearModel;
pub use tensor::Tensor;

use crate::error::{BanditError, Result};
use crate::rng::SimRng;

/// How a model produces a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictMode {
    /// Deterministic estimate, dropout off.
    Point,
    /// One stochastic forward pass with dropout active (a posterior draw).
    DropoutSample,
}

/// Flattened `(context, observed reward)` pairs. Append-only.
#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    dim: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl TrainingSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            inputs: Vec::new(),
            targets: Vec::new(),
        }
    }

    pub fn from_pairs(dim: usize, inputs: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if dim == 0 || inputs.len() != dim * targets.len() {
            return Err(BanditError::DimensionMismatch {
                expected: dim * targets.len(),
                actual: inputs.len(),
            });
        }
        Ok(Self {
            dim,
            inputs,
            targets,
        })
    }

    pub fn push(&mut self, context: &[f64], reward: f64) -> Result<()> {
        if context.len() != self.dim {
            return Err(BanditError::DimensionMismatch {
                expected: self.dim,
                actual: context.len(),
            });
        }
        self.inputs.extend_from_slice(context);
        self.targets.push(reward);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }
}

/// A trainable map from a context vector to an estimated expected reward.
pub trait RewardModel: Send {
    fn input_dim(&self) -> usize;

    /// Scores a flattened batch of contexts (`rows.len()` a multiple of `input_dim`).
    fn predict_rows(&self, rows: &[f64], mode: PredictMode, rng: &mut SimRng) -> Result<Vec<f64>>;

    fn predict(&self, context: &[f64], mode: PredictMode, rng: &mut SimRng) -> Result<f64> {
        if context.len() != self.input_dim() {
            return Err(BanditError::DimensionMismatch {
                expected: self.input_dim(),
                actual: context.len(),
            });
        }
        Ok(self.predict_rows(context, mode, rng)?[0])
    }

    /// Refits on the whole training set, returning the mean loss of each epoch.
    fn fit(&mut self, data: &TrainingSet, epochs: usize, rng: &mut SimRng) -> Result<Vec<f64>>;

    /// True when `DropoutSample` predictions are stochastic.
    fn has_posterior(&self) -> bool {
        false
    }

    fn kind(&self) -> ModelKind;

    fn parameters(&self) -> Vec<ParamBlock>;

    fn load_parameters(&mut self, blocks: &[ParamBlock]) -> Result<()>;
}

pub(crate) fn check_rows(rows: &[f64], dim: usize) -> Result<usize> {
    if rows.is_empty() || !rows.len().is_multiple_of(dim) {
        return Err(BanditError::DimensionMismatch {
            expected: dim,
            actual: rows.len(),
        });
    }
    Ok(rows.len() / dim)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Linear,
    NeuralLinear,
    Mlp,
    Cnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Linear,
        ModelKind::NeuralLinear,
        ModelKind::Mlp,
        ModelKind::Cnn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::NeuralLinear => "neural_linear",
            ModelKind::Mlp => "mlp",
            ModelKind::Cnn => "cnn",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = BanditError;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                BanditError::InvalidConfig(format!(
                    "model.kind must be one of linear, neural_linear, mlp, cnn; got {s:?}"
                ))
            })
    }
}

/// Model settings from the `model.*` config keys.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub hidden: usize,
    pub dropout: f64,
    pub batch_size: usize,
    pub ridge_lambda: f64,
    pub learning_rate: f64,
    /// Neural kinds: continue from the previous weights at each fit instead
    /// of redrawing them.
    pub warm_start: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            kind: ModelKind::Mlp,
            hidden: 100,
            dropout: 0.0,
            batch_size: 64,
            ridge_lambda: 1.0,
            learning_rate: AdamConfig::default().learning_rate,
            warm_start: false,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(BanditError::InvalidConfig(
                "model.hidden must be a positive integer".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(BanditError::InvalidConfig(format!(
                "model.dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.batch_size == 0 {
            return Err(BanditError::InvalidConfig(
                "model.batch_size must be a positive integer".into(),
            ));
        }
        if !(self.ridge_lambda >= 0.0 && self.ridge_lambda.is_finite()) {
            return Err(BanditError::InvalidConfig(format!(
                "model.ridge_lambda must be finite and >= 0, got {}",
                self.ridge_lambda
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(BanditError::InvalidConfig(format!(
                "model.learning_rate must be finite and > 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }

    /// Builds a freshly initialized model for contexts of length `input_dim`.
    /// `image_side` is set when contexts are square grayscale images; the
    /// convolutional model requires it and the neural-linear trunk follows it.
    pub fn build(
        &self,
        input_dim: usize,
        image_side: Option<usize>,
        rng: &mut SimRng,
    ) -> Result<Box<dyn RewardModel>> {
        self.validate()?;
        if input_dim == 0 {
            return Err(BanditError::InvalidConfig(
                "context dimension must be positive".into(),
            ));
        }
        if let Some(side) = image_side {
            if side * side != input_dim {
                return Err(BanditError::DimensionMismatch {
                    expected: side * side,
                    actual: input_dim,
                });
            }
        }
        Ok(match self.kind {
            ModelKind::Linear => Box::new(LinearModel::new(input_dim, self.ridge_lambda)),
            ModelKind::Mlp => {
                let mut m = NeuralModel::new(
                    ModelKind::Mlp,
                    Network::mlp(input_dim, self.hidden, self.dropout, rng),
                    self.adam(),
                    self.batch_size,
                );
                m.set_warm_start(self.warm_start);
                Box::new(m)
            }
            ModelKind::Cnn => {
                let side = image_side.ok_or_else(|| {
                    BanditError::InvalidConfig(
                        "model.kind=cnn needs an image environment (env.kind=mnist)".into(),
                    )
                })?;
                let mut m = NeuralModel::new(
                    ModelKind::Cnn,
                    Network::cnn(side, self.hidden, self.dropout, rng)?,
                    self.adam(),
                    self.batch_size,
                );
                m.set_warm_start(self.warm_start);
                Box::new(m)
            }
            ModelKind::NeuralLinear => {
                let net = match image_side {
                    Some(side) => Network::cnn(side, self.hidden, self.dropout, rng)?,
                    None => Network::mlp(input_dim, self.hidden, self.dropout, rng),
                };
                let mut m =
                    NeuralLinearModel::new(net, self.adam(), self.batch_size, self.ridge_lambda);
                m.set_warm_start(self.warm_start);
                Box::new(m)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn kind_round_trips_through_strings() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.as_str().parse::<ModelKind>().unwrap(), kind);
        }
        assert!("ridge".parse::<ModelKind>().is_err());
    }

    #[test]
    fn cnn_requires_image_environment() {
        let spec = ModelSpec {
            kind: ModelKind::Cnn,
            ..Default::default()
        };
        assert!(spec.build(117, None, &mut stream(0, 0)).is_err());
        assert!(spec.build(784, Some(27), &mut stream(0, 0)).is_err());
        let model = spec.build(784, Some(28), &mut stream(0, 0)).unwrap();
        assert_eq!(model.input_dim(), 784);
    }

    #[test]
    fn neural_linear_trunk_follows_context_shape() {
        let spec = ModelSpec {
            kind: ModelKind::NeuralLinear,
            hidden: 7,
            ..Default::default()
        };
        let mlp_trunk = spec.build(117, None, &mut stream(0, 0)).unwrap();
        assert_eq!(mlp_trunk.input_dim(), 117);
        let cnn_trunk = spec.build(784, Some(28), &mut stream(0, 0)).unwrap();
        assert_eq!(cnn_trunk.input_dim(), 784);
    }

    #[test]
    fn training_set_checks_dimension() {
        let mut set = TrainingSet::new(2);
        set.push(&[1.0, 2.0], 3.0).unwrap();
        assert!(set.push(&[1.0], 3.0).is_err());
        assert_eq!(set.len(), 1);
        assert_eq!(set.input(0), &[1.0, 2.0]);
    }

    #[test]
    fn spec_validation() {
        let bad = ModelSpec {
            dropout: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ModelSpec {
            ridge_lambda: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
