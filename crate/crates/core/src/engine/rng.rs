//! Named, independent random streams derived from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

/// Stream names used by the simulator. Each is keyed independently, so changing
/// how much randomness one consumer draws never shifts another.
pub mod streams {
    pub const ARRIVALS: &str = "arrivals";
    pub const SPEEDS: &str = "speeds";
    pub const REQUESTS: &str = "requests";
    pub const SHADOWING: &str = "shadowing";
    pub const FADING: &str = "fading";
    pub const SCHEDULER_TIEBREAK: &str = "scheduler-tiebreak";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStreams {
    master: u64,
}

impl RngStreams {
    pub fn new(master: u64) -> Self {
        RngStreams { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// 256-bit seed for `name`, hashed with the master seed.
    pub fn seed_bytes(&self, name: &str, index: u64) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"offload-sim/");
        h.update(name.as_bytes());
        h.update([0u8]);
        h.update(self.master.to_le_bytes());
        h.update(index.to_le_bytes());
        let out = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&out);
        seed
    }

    pub fn stream(&self, name: &str) -> SimRng {
        SimRng::from_seed(self.seed_bytes(name, 0))
    }

    /// Per-entity substream, e.g. one request generator per vehicle.
    pub fn substream(&self, name: &str, index: u64) -> SimRng {
        SimRng::from_seed(self.seed_bytes(name, index.wrapping_add(1)))
    }

    /// A 64-bit key for `name`, for cheap keyed derivations (see [`keyed_rng`]).
    pub fn key(&self, name: &str) -> u64 {
        let b = self.seed_bytes(name, u64::MAX);
        u64::from_le_bytes(b[..8].try_into().expect("8 bytes"))
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG determined only by `key` and the given parts, independent of call order.
pub fn keyed_rng(key: u64, parts: &[u64]) -> SimRng {
    let mut seed = [0u8; 32];
    let mut acc = mix64(key);
    for (i, chunk) in seed.chunks_mut(8).enumerate() {
        for &p in parts {
            acc = mix64(acc ^ p.wrapping_mul(0xD6E8_FEB8_6659_FD93));
        }
        acc = mix64(acc ^ i as u64);
        chunk.copy_from_slice(&acc.to_le_bytes());
    }
    SimRng::from_seed(seed)
}
