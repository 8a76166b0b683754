//! Seed streams.
//!
//! A [`SeedSpec`] names a ChaCha8 key; every record gets its own 64-bit
//! ChaCha stream under that key, so records can be generated in any order
//! (or in parallel) and still reproduce bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SeedSpec {
    pub base_seed: u64,
    pub stream_id: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeedSpec {
    pub fn new(base_seed: u64, stream_id: u64) -> Self {
        Self { base_seed, stream_id }
    }

    fn key(&self) -> [u8; 32] {
        let mut state = self.base_seed ^ self.stream_id.rotate_left(32).wrapping_mul(0xD605_BBB5_8C8A_BF2B);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        key
    }

    /// Derived seed for sub-task `index` (e.g. replication `r`).
    pub fn child(&self, index: u64) -> SeedSpec {
        let mut state = self.base_seed ^ 0x5851_F42D_4C95_7F2D;
        let a = splitmix64(&mut state);
        let mut state = a ^ self.stream_id;
        let base = splitmix64(&mut state);
        SeedSpec { base_seed: base, stream_id: index }
    }

    /// The generator for stream 0 of this seed.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.key())
    }

    /// Independent generator for record `record`.
    pub fn record_rng(&self, record: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key());
        rng.set_stream(record.wrapping_add(1));
        rng
    }
}
