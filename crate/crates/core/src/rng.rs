//! Seeded random sources split per (sample, epoch, stream).
//!
//! Every stochastic step draws from a generator derived from the run seed and
//! a stable key, so the order in which samples are processed never changes
//! what any one of them sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SplitRng = ChaCha8Rng;

/// Which consumer a derived generator feeds. Separate streams keep SC and KP
/// draws independent for the same sample and epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Crop,
    Perturb,
    Shuffle,
    Split,
    Dropout,
    Init,
    Other(u32),
}

impl Stream {
    fn tag(self) -> [u8; 5] {
        let (kind, extra) = match self {
            Stream::Crop => (1u8, 0u32),
            Stream::Perturb => (2, 0),
            Stream::Shuffle => (3, 0),
            Stream::Split => (4, 0),
            Stream::Dropout => (5, 0),
            Stream::Init => (6, 0),
            Stream::Other(n) => (7, n),
        };
        let e = extra.to_le_bytes();
        [kind, e[0], e[1], e[2], e[3]]
    }
}

/// Generator for one sample in one epoch.
pub fn derive(seed: u64, stream: Stream, sample_id: &str, epoch: u64) -> SplitRng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(stream.tag());
    hasher.update(epoch.to_le_bytes());
    hasher.update((sample_id.len() as u64).to_le_bytes());
    hasher.update(sample_id.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Generator not tied to a sample (shuffling, initialization).
pub fn global(seed: u64, stream: Stream, epoch: u64) -> SplitRng {
    derive(seed, stream, "", epoch)
}
