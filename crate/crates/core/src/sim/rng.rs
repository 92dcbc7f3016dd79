//! Named random streams derived from the run seed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::crypto::{digest, digest_parts};

/// An independent generator for one `(purpose, index)` pair, so adding a
/// consumer never shifts the draws of another.
pub fn stream(seed: u64, purpose: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(digest_parts(&[
        &seed.to_be_bytes(),
        purpose.as_bytes(),
        &index.to_be_bytes(),
    ]))
}

/// A uniform draw in `[0, 1)` that depends only on its inputs.
pub fn unit_hash(seed: u64, purpose: &str, index: u64) -> f64 {
    let d = digest(
        &[
            &seed.to_be_bytes()[..],
            purpose.as_bytes(),
            &index.to_be_bytes()[..],
        ]
        .concat(),
    );
    let mut word = [0u8; 8];
    word.copy_from_slice(&d[..8]);
    (u64::from_be_bytes(word) >> 11) as f64 / (1u64 << 53) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_are_independent_and_repeatable() {
        let a1 = stream(7, "latency", 0).next_u64();
        let a2 = stream(7, "latency", 0).next_u64();
        let b = stream(7, "latency", 1).next_u64();
        let c = stream(7, "stop", 0).next_u64();
        assert_eq!(a1, a2);
        assert_ne!(a1, b);
        assert_ne!(a1, c);
    }

    #[test]
    fn unit_hash_is_in_range() {
        for i in 0..1000 {
            let u = unit_hash(3, "x", i);
            assert!((0.0..1.0).contains(&u));
        }
    }
}
