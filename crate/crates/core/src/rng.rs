//! Named, independent random streams derived from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init,
    Rollout,
    Batch,
    Eval,
    Split,
    Pretrain,
    Expert,
    Mediocre,
    Corrupt,
    Mix,
    Check,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Init => 1,
            Stream::Rollout => 2,
            Stream::Batch => 3,
            Stream::Eval => 4,
            Stream::Split => 5,
            Stream::Pretrain => 6,
            Stream::Expert => 10,
            Stream::Mediocre => 11,
            Stream::Corrupt => 12,
            Stream::Mix => 13,
            Stream::Check => 20,
        }
    }
}

/// A fresh generator for `stream` under `seed`. Two calls with the same
/// arguments yield identical sequences; different streams never overlap.
pub fn stream(seed: u64, which: Stream) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}
