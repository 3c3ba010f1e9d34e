//! Stable seed derivation for reproducible runs.
//!
//! Every stream of randomness in the crate (scene generation, epoch
//! shuffles, point selection, weight init) derives its seed from a master
//! seed plus a stream tag through `mix`. The mixer is a fixed splitmix64
//! finalizer, so derived seeds are identical across platforms and builds.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mix two 64-bit values into a well-scrambled derived seed.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a master seed with a list of stream tags.
pub fn mix_all(master: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(master, |acc, &t| mix(acc, t))
}

/// Deterministic RNG for a derived seed.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix_is_stable() {
        // Frozen values: derived seeds must never change between builds.
        assert_eq!(mix(0, 0), 0);
        assert_eq!(mix(42, 1), mix(42, 1));
        assert_ne!(mix(42, 1), mix(42, 2));
        assert_ne!(mix(42, 1), mix(43, 1));
    }

    #[test]
    fn rng_streams_are_reproducible() {
        use rand::Rng;
        let mut a = rng_from(mix(7, 3));
        let mut b = rng_from(mix(7, 3));
        for _ in 0..16 {
            assert_eq!(a.gen::<u64>(), b.gen::<u64>());
        }
    }
}
