//! Deterministic seed derivation for order-independent parallel replication.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream tags keep the independent pieces of one replicate on disjoint
/// generator states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Design1 = 1,
    Design2 = 2,
    Truth = 3,
    Noise1 = 4,
    Noise2 = 5,
    Basis = 6,
    Spectrum = 7,
    Bartlett = 8,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit hash of `(master, index, tag)`.
pub fn derive_seed(master: u64, index: u64, stream: Stream) -> u64 {
    let h = splitmix64(master);
    let h = splitmix64(h ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    splitmix64(h ^ (stream as u64).wrapping_mul(0xA076_1D64_78BD_642F))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

pub fn stream_rng(master: u64, index: u64, stream: Stream) -> SimRng {
    rng_from_seed(derive_seed(master, index, stream))
}
