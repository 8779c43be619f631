//! Splittable, counter-based random streams.
//!
//! A stream is keyed by `(experiment seed, replica id, tag)`. The key is
//! expanded with SplitMix64 into a ChaCha8 key, so streams for distinct keys
//! are independent and no generator state is ever shared between replicas.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const TAG_LEVEL: u64 = 0x4c45_5645_4c00_0000;
const TAG_PROBE: u64 = 0x5052_4f42_4500_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedRecord {
    pub experiment: u64,
    pub replica: u64,
}

impl SeedRecord {
    pub fn new(experiment: u64, replica: u64) -> Self {
        Self { experiment, replica }
    }

    /// Stream driving level field `j` of this replica.
    pub fn level_stream(&self, j: u32) -> ChaCha8Rng {
        self.stream(TAG_LEVEL | u64::from(j))
    }

    /// Stream for a named Monte Carlo probe; `index` separates chunks.
    pub fn probe_stream(&self, probe: u32, index: u64) -> ChaCha8Rng {
        self.stream(TAG_PROBE ^ (u64::from(probe) << 32) ^ mix(index))
    }

    pub fn stream(&self, tag: u64) -> ChaCha8Rng {
        let mut state = mix(self.experiment) ^ mix(self.replica.wrapping_add(0x9e37)) ^ mix(tag ^ 0xabcd);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}

#[inline]
fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn mix(x: u64) -> u64 {
    splitmix64(splitmix64(x))
}

/// Deterministic 64-bit hash of a sequence of words, used for priorities.
pub fn hash_words(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x6a09_e667_f3bc_c908u64, |acc, &w| splitmix64(acc ^ mix(w)))
}
