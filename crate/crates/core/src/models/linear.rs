use super::checkpoint::ParamBlock;
use super::layers::dot;
use super::{check_rows, ModelKind, PredictMode, RewardModel, TrainingSet};
use crate::error::{BanditError, Result};
use crate::rng::SimRng;

/// Ridge regression `y = w . x + bias`, solved in closed form.
///
/// Keeps the sufficient statistics `sum x~ x~^T` and `sum y x~` over the
/// augmented contexts `x~ = [x, 1]`, so a refit only absorbs pairs it has not
/// seen yet. The training set passed to `fit` is therefore treated as
/// append-only; a shorter set than last time restarts the statistics.
#[derive(Debug, Clone)]
pub struct LinearModel {
    dim: usize,
    ridge_lambda: f64,
    /// `dim + 1` entries; the bias is last.
    weights: Vec<f64>,
    /// Upper triangle of the Gram matrix, `(dim + 1)^2` row-major.
    gram: Vec<f64>,
    moment: Vec<f64>,
    absorbed: usize,
}

impl LinearModel {
    /// A zero-weight model.
    pub fn new(dim: usize, ridge_lambda: f64) -> Self {
        let p = dim + 1;
        Self {
            dim,
            ridge_lambda,
            weights: vec![0.0; p],
            gram: vec![0.0; p * p],
            moment: vec![0.0; p],
            absorbed: 0,
        }
    }

    pub fn with_weights(weights: Vec<f64>, ridge_lambda: f64) -> Result<Self> {
        if weights.len() < 2 {
            return Err(BanditError::InvalidArgument(
                "linear weights need at least one coefficient and a bias".into(),
            ));
        }
        let mut model = Self::new(weights.len() - 1, ridge_lambda);
        model.weights = weights;
        Ok(model)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn ridge_lambda(&self) -> f64 {
        self.ridge_lambda
    }

    pub fn absorbed(&self) -> usize {
        self.absorbed
    }

    pub fn reset_statistics(&mut self) {
        self.gram.fill(0.0);
        self.moment.fill(0.0);
        self.absorbed = 0;
    }

    /// Adds one `(context, reward)` pair to the sufficient statistics.
    pub fn absorb(&mut self, context: &[f64], reward: f64) {
        debug_assert_eq!(context.len(), self.dim);
        let p = self.dim + 1;
        let mut nz: Vec<(usize, f64)> = context
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .collect();
        nz.push((self.dim, 1.0));
        for (a, &(i, vi)) in nz.iter().enumerate() {
            self.moment[i] += reward * vi;
            let row = &mut self.gram[i * p..(i + 1) * p];
            for &(j, vj) in &nz[a..] {
                row[j] += vi * vj;
            }
        }
        self.absorbed += 1;
    }

    /// `lambda I + sum x~ x~^T` as a full symmetric matrix.
    pub fn system_matrix(&self) -> Vec<f64> {
        let p = self.dim + 1;
        let mut a = vec![0.0; p * p];
        for i in 0..p {
            for j in i..p {
                let v = self.gram[i * p + j] + if i == j { self.ridge_lambda } else { 0.0 };
                a[i * p + j] = v;
                a[j * p + i] = v;
            }
        }
        a
    }

    pub fn moment(&self) -> &[f64] {
        &self.moment
    }

    /// Re-solves the ridge normal equations from the current statistics.
    pub fn solve(&mut self) -> Result<()> {
        let a = self.system_matrix();
        self.weights = cholesky_solve(&a, self.dim + 1, &self.moment)?;
        Ok(())
    }

    pub fn predict_one(&self, context: &[f64]) -> f64 {
        dot(&self.weights[..self.dim], context) + self.weights[self.dim]
    }

    /// Mean squared error and its gradient with respect to the weights.
    pub fn mse_and_grad(&self, data: &TrainingSet) -> (f64, Vec<f64>) {
        let n = data.len() as f64;
        let mut grad = vec![0.0; self.dim + 1];
        let mut sse = 0.0;
        for i in 0..data.len() {
            let x = data.input(i);
            let r = self.predict_one(x) - data.target(i);
            sse += r * r;
            for (g, xi) in grad.iter_mut().zip(x) {
                *g += 2.0 * r * xi / n;
            }
            grad[self.dim] += 2.0 * r / n;
        }
        (sse / n, grad)
    }

    pub(crate) fn weights_mut(&mut self) -> &mut Vec<f64> {
        &mut self.weights
    }
}

/// Solves `a x = b` for symmetric positive definite `a` (`n x n`, row-major).
pub fn cholesky_solve(a: &[f64], n: usize, b: &[f64]) -> Result<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let row_j = &l[j * n..j * n + j];
        let diag = a[j * n + j] - dot(row_j, row_j);
        if !diag.is_finite() || diag <= 0.0 {
            return Err(BanditError::Numeric(format!(
                "normal equations are not positive definite (pivot {j}); use model.ridge_lambda > 0"
            )));
        }
        let d = diag.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let s = dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
            l[i * n + j] = (a[i * n + j] - s) / d;
        }
    }
    // L y = b
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (b[i] - dot(&l[i * n..i * n + i], &y[..i])) / l[i * n + i];
    }
    // L^T x = y
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Ok(x)
}

impl RewardModel for LinearModel {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn predict_rows(
        &self,
        rows: &[f64],
        _mode: PredictMode,
        _rng: &mut SimRng,
    ) -> Result<Vec<f64>> {
        check_rows(rows, self.dim)?;
        Ok(rows.chunks(self.dim).map(|x| self.predict_one(x)).collect())
    }

    /// Ignores `epochs`: absorbs any new pairs and solves the normal equations.
    /// The single returned loss is the training mean squared error.
    fn fit(&mut self, data: &TrainingSet, _epochs: usize, _rng: &mut SimRng) -> Result<Vec<f64>> {
        if data.is_empty() {
            return Err(BanditError::InvalidArgument(
                "fit needs at least one training pair".into(),
            ));
        }
        if data.dim() != self.dim {
            return Err(BanditError::DimensionMismatch {
                expected: self.dim,
                actual: data.dim(),
            });
        }
        if data.len() < self.absorbed {
            self.reset_statistics();
        }
        for i in self.absorbed..data.len() {
            self.absorb(data.input(i), data.target(i));
        }
        self.solve()?;
        let (mse, _) = self.mse_and_grad(data);
        if !mse.is_finite() {
            return Err(BanditError::DivergedTraining { epoch: 0 });
        }
        Ok(vec![mse])
    }

    fn kind(&self) -> ModelKind {
        ModelKind::Linear
    }

    fn parameters(&self) -> Vec<ParamBlock> {
        vec![ParamBlock::vector(self.weights.clone())]
    }

    fn load_parameters(&mut self, blocks: &[ParamBlock]) -> Result<()> {
        match blocks {
            [b] if b.shape == [self.dim + 1] => {
                self.weights.copy_from_slice(&b.data);
                Ok(())
            }
            _ => Err(BanditError::Checkpoint(format!(
                "linear model expects one block of shape [{}]",
                self.dim + 1
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn zero_model_predicts_zero() {
        let m = LinearModel::new(4, 1.0);
        let mut rng = stream(0, 0);
        let p = m
            .predict(&[1.0, -2.0, 3.0, 0.5], PredictMode::Point, &mut rng)
            .unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn single_pair_is_interpolated() {
        let mut m = LinearModel::new(3, 1e-8);
        let data = TrainingSet::from_pairs(3, vec![0.5, -1.0, 2.0], vec![4.0]).unwrap();
        m.fit(&data, 16, &mut stream(0, 0)).unwrap();
        assert!((m.predict_one(&[0.5, -1.0, 2.0]) - 4.0).abs() < 1e-6);
    }

    #[test]
    fn recovers_noise_free_linear_map() {
        let mut rng = stream(42, 0);
        let w: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut data = TrainingSet::new(5);
        for _ in 0..50 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = dot(&w, &x);
            data.push(&x, y).unwrap();
        }
        let mut m = LinearModel::new(5, 1e-8);
        m.fit(&data, 1, &mut rng).unwrap();
        for i in 0..data.len() {
            assert!((m.predict_one(data.input(i)) - data.target(i)).abs() < 1e-6);
        }
    }

    #[test]
    fn incremental_fit_matches_batch_fit() {
        let mut rng = stream(3, 0);
        let mut data = TrainingSet::new(3);
        let mut incremental = LinearModel::new(3, 0.5);
        for step in 0..30 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            data.push(&x, x[0] - 2.0 * x[2] + 0.1).unwrap();
            if step % 7 == 0 {
                incremental.fit(&data, 1, &mut rng).unwrap();
            }
        }
        incremental.fit(&data, 1, &mut rng).unwrap();
        let mut batch = LinearModel::new(3, 0.5);
        batch.fit(&data, 1, &mut rng).unwrap();
        for (a, b) in incremental.weights().iter().zip(batch.weights()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_system_without_ridge_is_an_error() {
        let mut m = LinearModel::new(2, 0.0);
        let data = TrainingSet::from_pairs(2, vec![1.0, 1.0], vec![1.0]).unwrap();
        assert!(matches!(
            m.fit(&data, 1, &mut stream(0, 0)),
            Err(BanditError::Numeric(_))
        ));
    }

    #[test]
    fn cholesky_small_system() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let x = cholesky_solve(&a, 2, &[2.0, 1.0]).unwrap();
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0).abs() < 1e-12);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0).abs() < 1e-12);
    }
}
