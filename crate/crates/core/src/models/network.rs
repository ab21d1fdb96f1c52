use std::ops::Range;

use super::layers::{Cache, Conv2d, Dense, Layer};
use super::tensor::Tensor;
use crate::error::{BanditError, Result};
use crate::rng::SimRng;

/// Channel widths of the three convolution blocks.
pub const CNN_CHANNELS: [usize; 3] = [8, 16, 32];
pub const CNN_KERNEL: usize = 3;

/// A feed-forward stack ending in a single scalar output node.
#[derive(Debug, Clone)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        let mut shape = input_shape.clone();
        for layer in &layers {
            match (layer, shape.len()) {
                (Layer::Dense(d), 1) if d.inputs == shape[0] => {}
                (Layer::Conv2d(c), 3) if c.in_channels == shape[0] => {
                    if shape[1] < c.kernel || shape[2] < c.kernel {
                        return Err(BanditError::InvalidConfig(format!(
                            "convolution kernel {} larger than input {shape:?}",
                            c.kernel
                        )));
                    }
                }
                (Layer::MaxPool2d, 3) if shape[1] >= 2 && shape[2] >= 2 => {}
                (Layer::Relu | Layer::Dropout(_) | Layer::Flatten, _) => {}
                _ => {
                    return Err(BanditError::InvalidConfig(format!(
                        "layer {layer:?} cannot take input of shape {shape:?}"
                    )))
                }
            }
            shape = layer.output_shape(&shape);
        }
        if shape != [1] {
            return Err(BanditError::InvalidConfig(format!(
                "network must end in a scalar output, got {shape:?}"
            )));
        }
        Ok(Self {
            input_shape,
            layers,
        })
    }

    /// `[d, H, H, 1]` perceptron with rectified hidden layers and optional
    /// dropout after each hidden activation.
    pub fn mlp(input_dim: usize, hidden: usize, dropout: f64, rng: &mut SimRng) -> Self {
        let layers = vec![
            Layer::Dense(Dense::he(input_dim, hidden, rng)),
            Layer::Relu,
            Layer::Dropout(dropout),
            Layer::Dense(Dense::he(hidden, hidden, rng)),
            Layer::Relu,
            Layer::Dropout(dropout),
            Layer::Dense(Dense::small_uniform(hidden, 1, rng)),
        ];
        Self::new(vec![input_dim], layers).expect("mlp geometry is valid")
    }

    /// Three (convolution, max-pool, rectifier) blocks on a `side x side`
    /// grayscale image, then one dense hidden layer of width `hidden`.
    pub fn cnn(side: usize, hidden: usize, dropout: f64, rng: &mut SimRng) -> Result<Self> {
        let mut layers = Vec::new();
        let mut in_channels = 1;
        for &out_channels in &CNN_CHANNELS {
            layers.push(Layer::Conv2d(Conv2d::he(
                in_channels,
                out_channels,
                CNN_KERNEL,
                rng,
            )));
            layers.push(Layer::MaxPool2d);
            layers.push(Layer::Relu);
            in_channels = out_channels;
        }
        layers.push(Layer::Flatten);
        let mut shape = vec![1, side, side];
        for layer in &layers {
            if let (Layer::Conv2d(c), true) = (layer, shape.len() == 3) {
                if shape[1] < c.kernel {
                    return Err(BanditError::InvalidConfig(format!(
                        "image side {side} too small for three convolution blocks"
                    )));
                }
            }
            if matches!(layer, Layer::MaxPool2d) && shape[1] < 2 {
                return Err(BanditError::InvalidConfig(format!(
                    "image side {side} too small for three pooling stages"
                )));
            }
            shape = layer.output_shape(&shape);
        }
        let flat = shape[0];
        layers.push(Layer::Dense(Dense::he(flat, hidden, rng)));
        layers.push(Layer::Relu);
        layers.push(Layer::Dropout(dropout));
        layers.push(Layer::Dense(Dense::small_uniform(hidden, 1, rng)));
        Self::new(vec![1, side, side], layers)
    }

    /// Redraws every weight with the constructor's scheme: variance-scaled
    /// for hidden layers, small uniform for the output node.
    pub fn reinitialize(&mut self, rng: &mut SimRng) {
        let head = self.head_index();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                Layer::Dense(d) if i == head => *d = Dense::small_uniform(d.inputs, d.outputs, rng),
                Layer::Dense(d) => *d = Dense::he(d.inputs, d.outputs, rng),
                Layer::Conv2d(c) => *c = Conv2d::he(c.in_channels, c.out_channels, c.kernel, rng),
                _ => {}
            }
        }
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn has_dropout(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l, Layer::Dropout(r) if *r > 0.0))
    }

    /// Index of the final dense layer; everything before it is the trunk.
    pub fn head_index(&self) -> usize {
        self.layers
            .iter()
            .rposition(|l| matches!(l, Layer::Dense(_)))
            .expect("network has an output layer")
    }

    /// Width of the last hidden layer (the trunk's output).
    pub fn feature_width(&self) -> usize {
        match &self.layers[self.head_index()] {
            Layer::Dense(d) => d.inputs,
            _ => unreachable!(),
        }
    }

    pub(crate) fn batch_tensor(&self, rows: &[f64]) -> Result<Tensor> {
        let item = self.input_len();
        if rows.is_empty() || !rows.len().is_multiple_of(item) {
            return Err(BanditError::DimensionMismatch {
                expected: item,
                actual: rows.len(),
            });
        }
        let mut shape = vec![rows.len() / item];
        shape.extend_from_slice(&self.input_shape);
        Tensor::from_vec(&shape, rows.to_vec())
    }

    pub(crate) fn run(
        &self,
        mut x: Tensor,
        range: Range<usize>,
        mut rng: Option<&mut SimRng>,
        keep: bool,
    ) -> (Tensor, Vec<Cache>) {
        let mut caches = Vec::with_capacity(if keep { range.len() } else { 0 });
        for layer in &self.layers[range] {
            let (out, cache) = layer.forward(x, rng.as_deref_mut(), keep);
            if keep {
                caches.push(cache);
            }
            x = out;
        }
        (x, caches)
    }

    /// Scalar outputs for a flattened batch of inputs.
    pub fn forward(&self, rows: &[f64], rng: Option<&mut SimRng>) -> Result<Vec<f64>> {
        let x = self.batch_tensor(rows)?;
        let (out, _) = self.run(x, 0..self.layers.len(), rng, false);
        Ok(out.into_data())
    }

    /// Last-hidden-layer activations, dropout off. Shape `[batch, feature_width]`.
    pub fn features(&self, rows: &[f64]) -> Result<Tensor> {
        let x = self.batch_tensor(rows)?;
        let (out, _) = self.run(x, 0..self.head_index(), None, false);
        Ok(out)
    }

    /// Which side of each non-differentiable point the batch sits on: the sign
    /// of every rectifier input and the winning position of every pooling
    /// window. Between two weight settings with equal patterns the loss is
    /// smooth.
    pub fn activation_pattern(&self, rows: &[f64]) -> Result<Vec<usize>> {
        let x = self.batch_tensor(rows)?;
        let (_, caches) = self.run(x, 0..self.layers.len(), None, true);
        let mut pattern = Vec::new();
        for (layer, cache) in self.layers.iter().zip(caches) {
            match (layer, cache) {
                (Layer::Relu, Cache::Input(x)) => {
                    pattern.extend(x.data().iter().map(|v| usize::from(*v > 0.0)))
                }
                (Layer::MaxPool2d, Cache::Pool { argmax, .. }) => pattern.extend(argmax),
                _ => {}
            }
        }
        Ok(pattern)
    }

    /// Sum of squared errors over the batch and the gradient of the mean
    /// squared error with respect to every parameter block.
    pub(crate) fn loss_and_grads(
        &self,
        rows: &[f64],
        targets: &[f64],
        rng: Option<&mut SimRng>,
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        let x = self.batch_tensor(rows)?;
        let batch = x.batch();
        if targets.len() != batch {
            return Err(BanditError::DimensionMismatch {
                expected: batch,
                actual: targets.len(),
            });
        }
        let (out, caches) = self.run(x, 0..self.layers.len(), rng, true);
        let mut sse = 0.0;
        let scale = 2.0 / batch as f64;
        let grad: Vec<f64> = out
            .data()
            .iter()
            .zip(targets)
            .map(|(y, t)| {
                let r = y - t;
                sse += r * r;
                scale * r
            })
            .collect();
        let mut grad = Tensor::from_vec(&[batch, 1], grad)?;
        let mut blocks: Vec<Vec<Vec<f64>>> = Vec::with_capacity(self.layers.len());
        for (i, (layer, cache)) in self.layers.iter().zip(caches).enumerate().rev() {
            let (dx, pg) = layer.backward(cache, grad, i > 0);
            blocks.push(pg);
            match dx {
                Some(dx) => grad = dx,
                None => break,
            }
        }
        blocks.reverse();
        Ok((sse, blocks.into_iter().flatten().collect()))
    }
}
