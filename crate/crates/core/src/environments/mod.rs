//! Bandit environments and dataset ingestion.
//!
//! Each round an [`Environment`] produces a [`RoundDraw`]: one context per arm,
//! the noise-free expected reward of every arm, and a sampler that adds noise
//! only when an arm is actually observed.

pub mod mnist;
pub mod mushroom;
pub mod synthetic;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};

use crate::bandit::ContextMatrix;
use crate::error::{BanditError, Result};
use crate::rng::SimRng;

pub use mnist::{parse_idx, MnistEnv, MnistPool};
pub use mushroom::{parse_mushroom_csv, MushroomEnv, MushroomPool, MushroomRecord};
pub use synthetic::SyntheticLinearEnv;

/// Environment variable naming the dataset root directory.
pub const DATA_ROOT_VAR: &str = "TOPK_BANDIT_DATA";
pub const MUSHROOM_FILE: &str = "mushroom/agaricus-lepiota.data";
pub const MNIST_DIR: &str = "mnist";

/// One round's draw.
#[derive(Debug, Clone)]
pub struct RoundDraw {
    pub contexts: ContextMatrix,
    pub true_means: Vec<f64>,
    noise_scale: f64,
}

impl RoundDraw {
    pub fn new(contexts: ContextMatrix, true_means: Vec<f64>, noise_scale: f64) -> Result<Self> {
        if true_means.len() != contexts.arm_count() {
            return Err(BanditError::DimensionMismatch {
                expected: contexts.arm_count(),
                actual: true_means.len(),
            });
        }
        Ok(Self {
            contexts,
            true_means,
            noise_scale,
        })
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    /// Noisy reward for `arm`: true mean plus `noise_scale` times a standard
    /// normal draw. Consumes one normal from `rng` only when the scale is non-zero.
    pub fn observe(&self, arm: usize, rng: &mut SimRng) -> f64 {
        let mean = self.true_means[arm];
        if self.noise_scale == 0.0 {
            return mean;
        }
        let eta: f64 = StandardNormal.sample(rng);
        mean + self.noise_scale * eta
    }
}

pub trait Environment: Send {
    fn kind(&self) -> EnvKind;
    fn arm_count(&self) -> usize;
    fn context_dim(&self) -> usize;

    /// Side length when contexts are square grayscale images.
    fn image_side(&self) -> Option<usize> {
        None
    }

    fn noise_scale(&self) -> f64;

    /// Draws the contexts and true means for round `t`.
    fn draw_round(&mut self, t: usize, rng: &mut SimRng) -> Result<RoundDraw>;
}

/// Indices of the `k` largest means (ties to the lowest index) and their sum.
pub fn oracle_top_k(true_means: &[f64], k: usize) -> Result<(Vec<usize>, f64)> {
    if k > true_means.len() {
        return Err(BanditError::InvalidConfig(format!(
            "K ≤ n required (K = {k}, n = {})",
            true_means.len()
        )));
    }
    let mut order: Vec<usize> = (0..true_means.len()).collect();
    order.sort_by(|&a, &b| true_means[b].total_cmp(&true_means[a]).then(a.cmp(&b)));
    order.truncate(k);
    let value = order.iter().map(|&i| true_means[i]).sum();
    Ok((order, value))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EnvKind {
    Mushroom,
    Mnist,
    Synthetic,
}

impl EnvKind {
    pub const ALL: [EnvKind; 3] = [EnvKind::Mushroom, EnvKind::Mnist, EnvKind::Synthetic];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvKind::Mushroom => "mushroom",
            EnvKind::Mnist => "mnist",
            EnvKind::Synthetic => "synthetic",
        }
    }

    pub fn default_noise_scale(self) -> f64 {
        match self {
            EnvKind::Mushroom => 0.5,
            EnvKind::Mnist => 2.0,
            EnvKind::Synthetic => 0.1,
        }
    }

    pub fn default_arms(self) -> (usize, usize) {
        match self {
            EnvKind::Mushroom => (30, 3),
            EnvKind::Mnist => (20, 5),
            EnvKind::Synthetic => (20, 3),
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvKind {
    type Err = BanditError;

    fn from_str(s: &str) -> Result<Self> {
        EnvKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                BanditError::InvalidConfig(format!(
                    "env.kind must be one of mushroom, mnist, synthetic; got {s:?}"
                ))
            })
    }
}

/// Environment settings from the `env.*` config keys.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub n: usize,
    pub k: usize,
    pub noise_scale: f64,
    /// Mushroom: the CSV file. MNIST: the directory holding the IDX files.
    pub data_path: Option<PathBuf>,
    /// Mushroom only: exactly K edible slots per round instead of Bernoulli(K/n).
    pub exact_balance: bool,
    /// Synthetic only: context dimension.
    pub dim: usize,
}

impl EnvSpec {
    pub fn new(kind: EnvKind) -> Self {
        let (n, k) = kind.default_arms();
        Self {
            kind,
            n,
            k,
            noise_scale: kind.default_noise_scale(),
            data_path: None,
            exact_balance: false,
            dim: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(BanditError::InvalidConfig("env.n must be >= 1".into()));
        }
        if self.k == 0 || self.k > self.n {
            return Err(BanditError::InvalidConfig(format!(
                "K ≤ n required (env.K = {}, env.n = {}); K must also be >= 1",
                self.k, self.n
            )));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(BanditError::InvalidConfig(format!(
                "env.noise_scale must be finite and >= 0, got {}",
                self.noise_scale
            )));
        }
        if self.kind == EnvKind::Synthetic && self.dim == 0 {
            return Err(BanditError::InvalidConfig("env.dim must be >= 1".into()));
        }
        Ok(())
    }

    /// Dataset location: `env.data_path` if set, else under the data root.
    pub fn resolved_data_path(&self) -> Option<PathBuf> {
        let rel = match self.kind {
            EnvKind::Mushroom => MUSHROOM_FILE,
            EnvKind::Mnist => MNIST_DIR,
            EnvKind::Synthetic => return None,
        };
        Some(
            self.data_path
                .clone()
                .unwrap_or_else(|| data_root().join(rel)),
        )
    }

    /// Builds the environment, loading its dataset through `pools`.
    /// `rng` is only consumed by environments with hidden parameters.
    pub fn build(&self, pools: &DataPools, rng: &mut SimRng) -> Result<Box<dyn Environment>> {
        self.validate()?;
        Ok(match self.kind {
            EnvKind::Mushroom => {
                let pool = pools.mushroom(&self.resolved_data_path().expect("dataset kind"))?;
                let mut env = MushroomEnv::new(pool, self.n, self.k, self.noise_scale)?;
                env.set_exact_balance(self.exact_balance);
                Box::new(env)
            }
            EnvKind::Mnist => {
                let pool = pools.mnist(&self.resolved_data_path().expect("dataset kind"))?;
                Box::new(MnistEnv::new(pool, self.n, self.noise_scale)?)
            }
            EnvKind::Synthetic => Box::new(SyntheticLinearEnv::new(
                self.dim,
                self.n,
                self.noise_scale,
                rng,
            )?),
        })
    }
}

/// `$TOPK_BANDIT_DATA`, or `./data` when unset.
pub fn data_root() -> PathBuf {
    std::env::var_os(DATA_ROOT_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

/// Parsed datasets shared read-only between runs. Each file is parsed at most
/// once per cache.
#[derive(Debug, Default)]
pub struct DataPools {
    mushroom: std::sync::Mutex<Vec<(PathBuf, Arc<MushroomPool>)>>,
    mnist: std::sync::Mutex<Vec<(PathBuf, Arc<MnistPool>)>>,
}

impl DataPools {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn mushroom(&self, path: &Path) -> Result<Arc<MushroomPool>> {
        let mut cache = self.mushroom.lock().expect("pool cache poisoned");
        if let Some((_, pool)) = cache.iter().find(|(p, _)| p == path) {
            return Ok(Arc::clone(pool));
        }
        let pool = Arc::new(parse_mushroom_csv(path)?);
        cache.push((path.to_path_buf(), Arc::clone(&pool)));
        Ok(pool)
    }

    /// Loads the MNIST training split from `dir`.
    pub fn mnist(&self, dir: &Path) -> Result<Arc<MnistPool>> {
        let mut cache = self.mnist.lock().expect("pool cache poisoned");
        if let Some((_, pool)) = cache.iter().find(|(p, _)| p == dir) {
            return Ok(Arc::clone(pool));
        }
        let pool = Arc::new(parse_idx(
            &dir.join(mnist::TRAIN_IMAGES),
            &dir.join(mnist::TRAIN_LABELS),
        )?);
        cache.push((dir.to_path_buf(), Arc::clone(&pool)));
        Ok(pool)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn brute_force(means: &[f64], k: usize) -> f64 {
        let n = means.len();
        (0u32..1 << n)
            .filter(|m| m.count_ones() as usize == k)
            .map(|m| (0..n).filter(|i| m >> i & 1 == 1).map(|i| means[i]).sum())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn oracle_examples() {
        let (idx, v) = oracle_top_k(&[1.0, 0.0, 1.0, 0.0, 1.0], 3).unwrap();
        assert_eq!((idx, v), (vec![0, 2, 4], 3.0));
        let (idx, v) = oracle_top_k(&[9.0, 9.0, 1.0, 0.0, 5.0], 2).unwrap();
        assert_eq!((idx, v), (vec![0, 1], 18.0));
        assert!(oracle_top_k(&[1.0], 2).is_err());
    }

    #[test]
    fn oracle_ties_prefer_lowest_index() {
        let (idx, _) = oracle_top_k(&[0.0, 1.0, 1.0, 1.0], 2).unwrap();
        assert_eq!(idx, vec![1, 2]);
    }

    #[test]
    fn oracle_matches_exhaustive_search() {
        let mut rng = stream(11, 0);
        for _ in 0..200 {
            let means: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, v) = oracle_top_k(&means, 4).unwrap();
            assert!((v - brute_force(&means, 4)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_noise_observation_is_the_mean() {
        let ctx = ContextMatrix::from_flat(2, 1, vec![0.0, 1.0], 1).unwrap();
        let draw = RoundDraw::new(ctx, vec![1.0, 7.0], 0.0).unwrap();
        assert_eq!(draw.observe(1, &mut stream(0, 0)), 7.0);
    }

    #[test]
    fn spec_rejects_k_above_n() {
        let spec = EnvSpec {
            n: 5,
            k: 10,
            ..EnvSpec::new(EnvKind::Synthetic)
        };
        let msg = spec.validate().unwrap_err().to_string();
        assert!(msg.contains("K ≤ n required"), "{msg}");
    }
}
