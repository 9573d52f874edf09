//! Seeded random streams.
//!
//! Every stream is a ChaCha8 keystream keyed by `(base_seed, run_index)` with
//! the purpose tag selecting the ChaCha stream id. Streams for different
//! purposes never overlap, so adding a consumer of randomness in one place
//! cannot shift the samples drawn anywhere else.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Initial Q-tables.
    Init,
    /// Next-state and reward sampling in episodic environments.
    Environment,
    /// ε-greedy coin flips and random actions.
    Exploration,
    /// The fair coin that picks which double-Q estimator updates.
    EstimatorCoin,
    /// i.i.d. state–action sampling for the analysis mode.
    Sampler,
    /// Random MDP generation.
    MdpGeneration,
    /// Anything else; the tag must not collide with the named purposes (0..16).
    Custom(u64),
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Init => 1,
            Purpose::Environment => 2,
            Purpose::Exploration => 3,
            Purpose::EstimatorCoin => 4,
            Purpose::Sampler => 5,
            Purpose::MdpGeneration => 6,
            Purpose::Custom(t) => 16 + t,
        }
    }
}

/// Derives the stream for `(base_seed, run_index, purpose)`.
pub fn stream(base_seed: u64, run_index: u64, purpose: Purpose) -> StreamRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&base_seed.to_le_bytes());
    key[8..16].copy_from_slice(&run_index.to_le_bytes());
    key[16..24].copy_from_slice(b"sdq-lab\0");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(purpose.tag());
    rng
}
