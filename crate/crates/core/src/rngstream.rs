//! Seed-derived random streams.
//!
//! Every consumer of randomness gets its own ChaCha8 stream derived
//! from the run seed plus a role tag, so adding a new consumer never
//! shifts the values another one sees.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream roles. The discriminant feeds the stream derivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    EnvInit = 1,
    PolicyNoise = 2,
    McSamples = 3,
    Shuffle = 4,
    Eval = 5,
    ParamInit = 6,
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive a sub-stream from (seed, role, index triple).
///
/// SplitMix64-style mixing keeps nearby (seed, index) pairs from
/// producing correlated ChaCha keys.
pub fn derive(seed: u64, role: Role, a: u64, b: u64) -> ChaCha8Rng {
    let mut x = seed ^ (role as u64).wrapping_mul(0x9e3779b97f4a7c15);
    x = x.wrapping_add(a.wrapping_mul(0xbf58476d1ce4e5b9));
    x = x.wrapping_add(b.wrapping_mul(0x94d049bb133111eb));
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58476d1ce4e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d049bb133111eb);
    x ^= x >> 31;
    ChaCha8Rng::seed_from_u64(x)
}
