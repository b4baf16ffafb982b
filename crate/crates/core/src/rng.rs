//! Seed derivation and RNG construction.
//!
//! Every randomized stage draws from a ChaCha8 stream seeded through
//! [`derive_seed`], so one master seed plus a per-purpose tag fully
//! determines every random decision in a run regardless of scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::hash::{fnv1a_64, fnv1a_64_extend};

/// Derive a child seed from a master seed and a purpose tag.
///
/// Scheme: `fnv1a64(le_bytes(master) || tag_bytes)`. Documented in run
/// manifests so any stage seed can be recomputed externally.
pub fn derive_seed(master: u64, tag: &str) -> u64 {
    fnv1a_64_extend(fnv1a_64(&master.to_le_bytes()), tag.as_bytes())
}

/// Deterministic RNG for a seed. ChaCha8 keeps the stream stable across
/// platforms and library versions.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derive_is_deterministic_and_tag_sensitive() {
        assert_eq!(derive_seed(7, "cv"), derive_seed(7, "cv"));
        assert_ne!(derive_seed(7, "cv"), derive_seed(7, "holdout"));
        assert_ne!(derive_seed(7, "cv"), derive_seed(8, "cv"));
    }

    #[test]
    fn rng_streams_repeat() {
        let a: Vec<u32> = (0..4).map(|_| 0).scan(rng_from_seed(3), |r, _| Some(r.gen())).collect();
        let b: Vec<u32> = (0..4).map(|_| 0).scan(rng_from_seed(3), |r, _| Some(r.gen())).collect();
        assert_eq!(a, b);
    }
}
