//! Counter-based random streams.
//!
//! Every consumer gets its own ChaCha stream keyed by `(seed, index, purpose)`,
//! so the numbers seen by individual `ω` never depend on how many draws other
//! individuals consumed or in which order they were generated.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type Stream = ChaCha12Rng;

/// What a stream is used for. Each purpose gets a disjoint stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Coefficients = 0,
    NoiseVariance = 1,
    Innovations = 2,
    InitialState = 3,
    Sampling = 4,
}

const PURPOSES: u64 = 8;

/// Stream for consumer `index` (an individual, a replication, …) and `purpose`.
pub fn stream(seed: u64, index: u64, purpose: Purpose) -> Stream {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_mul(PURPOSES).wrapping_add(purpose as u64));
    rng
}

/// SplitMix64 finalizer; derives child seeds (e.g. per replication).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
