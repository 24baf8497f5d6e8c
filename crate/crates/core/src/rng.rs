//! Seeded random streams.
//!
//! Every stochastic component draws from its own ChaCha stream, derived from
//! the run seed and a label, so adding a draw in one place never shifts the
//! numbers another component sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Independent stream for `label` under `seed`.
pub fn stream(seed: u64, label: &str) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(label.as_bytes()));
    rng
}

/// Stream for the `index`-th repetition of `label` (epochs, batches, probes).
pub fn substream(seed: u64, label: &str, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(fnv1a(label.as_bytes()));
    rng
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn labels_give_distinct_streams() {
        let a: u64 = stream(7, "init").gen();
        let b: u64 = stream(7, "dropout").gen();
        let c: u64 = stream(7, "init").gen();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}
