//! Counter-based random streams.
//!
//! A stream is fully determined by `(seed, purpose tag, index)`, so work can be
//! split across any number of threads without changing what each unit draws.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct StreamKey {
    pub seed: u64,
    pub tag: u64,
    pub index: u64,
}

// FNV-1a; stable across platforms and compiler versions.
fn tag_hash(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl StreamKey {
    pub fn new(seed: u64, tag: &str, index: u64) -> Self {
        Self {
            seed,
            tag: tag_hash(tag),
            index,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomStream {
    key: StreamKey,
    rng: ChaCha12Rng,
}

impl RandomStream {
    pub fn new(seed: u64, tag: &str, index: u64) -> Self {
        Self::from_key(StreamKey::new(seed, tag, index))
    }

    pub fn from_key(key: StreamKey) -> Self {
        let mut bytes = [0u8; 32];
        bytes[..8].copy_from_slice(&key.seed.to_le_bytes());
        bytes[8..16].copy_from_slice(&key.tag.to_le_bytes());
        bytes[16..24].copy_from_slice(&key.index.to_le_bytes());
        Self {
            key,
            rng: ChaCha12Rng::from_seed(bytes),
        }
    }

    pub fn key(&self) -> StreamKey {
        self.key
    }

    /// Child stream for sub-unit `index` under a new purpose tag.
    pub fn derive(&self, tag: &str, index: u64) -> Self {
        let mixed = self.key.seed ^ self.key.tag.rotate_left(17) ^ self.key.index.rotate_left(41);
        Self::new(mixed, tag, index)
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
