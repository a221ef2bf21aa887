//! Seed derivation. Every random stream in the crate is a `ChaCha8Rng` seeded
//! from a base seed mixed with a fixed list of stream identifiers, so streams
//! are independent of the order in which they are created.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `base` with each stream identifier in `parts`.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(base: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, parts))
}

// Stream identifiers.
pub(crate) const GENERATE: u64 = 1;
pub(crate) const SPLIT: u64 = 2;
pub(crate) const HOLDOUT: u64 = 3;
pub(crate) const FEATURES: u64 = 4;
pub(crate) const SHUFFLE: u64 = 5;
pub(crate) const MEMORY_BATCH: u64 = 6;
pub(crate) const MEMORY_UPDATE: u64 = 7;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_parts_give_distinct_seeds() {
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
        assert_ne!(derive_seed(1, &[2]), derive_seed(2, &[2]));
        assert_eq!(derive_seed(9, &[4, 5]), derive_seed(9, &[4, 5]));
    }
}
