//! Finite-difference verification of the analytic gradients.

use rand::seq::index;

use super::linear::LinearModel;
use super::network::Network;
use super::neural::NeuralModel;
use super::TrainingSet;
use crate::error::{BanditError, Result};
use crate::rng::SimRng;

/// Gradients smaller than this in both routes count as agreeing zeros.
pub const GRADIENT_FLOOR: f64 = 1e-10;

/// A model whose mean-squared-error gradient can be probed parameter by parameter.
/// Dropout is never active here.
pub trait Differentiable {
    fn param_len(&self) -> usize;
    fn get_param(&self, index: usize) -> f64;
    fn set_param(&mut self, index: usize, value: f64);
    fn mse(&self, data: &TrainingSet) -> Result<f64>;
    /// Analytic gradient of `mse`, flattened in parameter order.
    fn mse_gradient(&self, data: &TrainingSet) -> Result<Vec<f64>>;

    /// Identifies the smooth piece of the loss the current weights lie on
    /// (see [`Network::activation_pattern`]). Empty for smooth models.
    fn kink_pattern(&self, _data: &TrainingSet) -> Result<Vec<usize>> {
        Ok(Vec::new())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientReport {
    pub max_relative_error: f64,
    /// Parameters compared.
    pub probes: usize,
    /// Parameters passed over because `w - h` and `w + h` straddle a
    /// rectifier or pooling switch, where the central difference does not
    /// estimate the derivative.
    pub kinks_skipped: usize,
}

/// Compares the analytic gradient with central differences
/// `(f(w + h) - f(w - h)) / 2h` at `probe_count` randomly chosen parameters.
///
/// Parameters are drawn without replacement; a draw whose difference
/// interval crosses a kink is skipped and replaced by the next draw. Fails
/// when fewer than `probe_count` parameters survive.
pub fn gradient_check(
    model: &mut dyn Differentiable,
    data: &TrainingSet,
    probe_count: usize,
    h: f64,
    rng: &mut SimRng,
) -> Result<GradientReport> {
    if probe_count == 0 || h.is_nan() || h <= 0.0 {
        return Err(BanditError::InvalidArgument(
            "gradient check needs probe_count >= 1 and h > 0".into(),
        ));
    }
    let analytic = model.mse_gradient(data)?;
    let base = model.kink_pattern(data)?;
    let total = model.param_len();
    let mut report = GradientReport {
        max_relative_error: 0.0,
        probes: 0,
        kinks_skipped: 0,
    };
    for i in index::sample(rng, total, total) {
        if report.probes == probe_count {
            break;
        }
        let w = model.get_param(i);
        model.set_param(i, w + h);
        let plus = model.mse(data)?;
        let smooth_plus = model.kink_pattern(data)? == base;
        model.set_param(i, w - h);
        let minus = model.mse(data)?;
        let smooth_minus = model.kink_pattern(data)? == base;
        model.set_param(i, w);
        if !(smooth_plus && smooth_minus) {
            report.kinks_skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[i];
        let scale = a.abs().max(numeric.abs());
        let rel = if scale < GRADIENT_FLOOR {
            0.0
        } else {
            (a - numeric).abs() / scale
        };
        report.max_relative_error = report.max_relative_error.max(rel);
        report.probes += 1;
    }
    if report.probes < probe_count {
        return Err(BanditError::InvalidArgument(format!(
            "gradient check wanted {probe_count} probes but only {} of {total} parameters are away from a kink",
            report.probes
        )));
    }
    Ok(report)
}

fn locate(blocks: &[&[f64]], mut index: usize) -> (usize, usize) {
    for (b, block) in blocks.iter().enumerate() {
        if index < block.len() {
            return (b, index);
        }
        index -= block.len();
    }
    panic!("parameter index out of range");
}

impl Differentiable for Network {
    fn param_len(&self) -> usize {
        self.param_count()
    }

    fn get_param(&self, index: usize) -> f64 {
        let blocks = self.params();
        let (b, i) = locate(&blocks, index);
        blocks[b][i]
    }

    fn set_param(&mut self, index: usize, value: f64) {
        let (b, i) = locate(&self.params(), index);
        self.params_mut()[b][i] = value;
    }

    fn mse(&self, data: &TrainingSet) -> Result<f64> {
        let out = self.forward(data.inputs(), None)?;
        let sse: f64 = out
            .iter()
            .zip(data.targets())
            .map(|(y, t)| (y - t) * (y - t))
            .sum();
        Ok(sse / data.len() as f64)
    }

    fn mse_gradient(&self, data: &TrainingSet) -> Result<Vec<f64>> {
        let (_, grads) = self.loss_and_grads(data.inputs(), data.targets(), None)?;
        Ok(grads.into_iter().flatten().collect())
    }

    fn kink_pattern(&self, data: &TrainingSet) -> Result<Vec<usize>> {
        self.activation_pattern(data.inputs())
    }
}

impl Differentiable for NeuralModel {
    fn param_len(&self) -> usize {
        self.network().param_len()
    }

    fn get_param(&self, index: usize) -> f64 {
        self.network().get_param(index)
    }

    fn set_param(&mut self, index: usize, value: f64) {
        self.network_mut().set_param(index, value)
    }

    fn mse(&self, data: &TrainingSet) -> Result<f64> {
        self.network().mse(data)
    }

    fn mse_gradient(&self, data: &TrainingSet) -> Result<Vec<f64>> {
        self.network().mse_gradient(data)
    }

    fn kink_pattern(&self, data: &TrainingSet) -> Result<Vec<usize>> {
        self.network().kink_pattern(data)
    }
}

impl Differentiable for LinearModel {
    fn param_len(&self) -> usize {
        self.weights().len()
    }

    fn get_param(&self, index: usize) -> f64 {
        self.weights()[index]
    }

    fn set_param(&mut self, index: usize, value: f64) {
        self.weights_mut()[index] = value;
    }

    fn mse(&self, data: &TrainingSet) -> Result<f64> {
        Ok(self.mse_and_grad(data).0)
    }

    fn mse_gradient(&self, data: &TrainingSet) -> Result<Vec<f64>> {
        Ok(self.mse_and_grad(data).1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn random_set(dim: usize, count: usize, seed: u64) -> TrainingSet {
        let mut rng = stream(seed, 0);
        let mut set = TrainingSet::new(dim);
        for _ in 0..count {
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            set.push(&x, rng.random_range(-1.0..1.0)).unwrap();
        }
        set
    }

    #[test]
    fn linear_gradient_is_exact() {
        let mut rng = stream(1, 1);
        let w: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut m = LinearModel::with_weights(w, 1.0).unwrap();
        let data = random_set(6, 20, 2);
        let report = gradient_check(&mut m, &data, 7, 1e-4, &mut rng).unwrap();
        assert_eq!((report.probes, report.kinks_skipped), (7, 0));
        assert!(report.max_relative_error < 1e-8, "{report:?}");
    }

    #[test]
    fn probing_restores_parameters() {
        let mut net = Network::mlp(4, 5, 0.0, &mut stream(3, 0));
        let before: Vec<Vec<f64>> = net.params().iter().map(|p| p.to_vec()).collect();
        let data = random_set(4, 5, 4);
        gradient_check(&mut net, &data, 10, 1e-4, &mut stream(5, 0)).unwrap();
        let after: Vec<Vec<f64>> = net.params().iter().map(|p| p.to_vec()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn wide_steps_skip_kinks_and_stay_exact() {
        // Off the kinks one weight moves the loss along a parabola, so even a
        // wide central difference is exact there.
        let mut net = Network::mlp(4, 8, 0.0, &mut stream(3, 0));
        let data = random_set(4, 12, 4);
        let report = gradient_check(&mut net, &data, 20, 0.3, &mut stream(6, 0)).unwrap();
        assert!(report.kinks_skipped > 0, "{report:?}");
        assert!(report.max_relative_error < 1e-8, "{report:?}");
    }

    #[test]
    fn rejects_bad_arguments() {
        let mut net = Network::mlp(2, 2, 0.0, &mut stream(3, 0));
        let data = random_set(2, 3, 4);
        assert!(gradient_check(&mut net, &data, 0, 1e-4, &mut stream(0, 0)).is_err());
        assert!(gradient_check(&mut net, &data, 3, 0.0, &mut stream(0, 0)).is_err());
    }
}
