//! Seeded random streams.
//!
//! A run derives independent ChaCha streams from one 64-bit seed so that the
//! environment, the policy and the model never share a generator. Changing how
//! many numbers one component consumes leaves the others untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

const ENV_STREAM: u64 = 1;
const POLICY_STREAM: u64 = 2;
const INIT_STREAM: u64 = 3;
const TRAIN_STREAM: u64 = 4;

pub fn stream(seed: u64, id: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// The per-run generators.
#[derive(Debug, Clone)]
pub struct RunStreams {
    pub env: SimRng,
    pub policy: SimRng,
    pub init: SimRng,
    pub train: SimRng,
}

impl RunStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            env: stream(seed, ENV_STREAM),
            policy: stream(seed, POLICY_STREAM),
            init: stream(seed, INIT_STREAM),
            train: stream(seed, TRAIN_STREAM),
        }
    }
}
