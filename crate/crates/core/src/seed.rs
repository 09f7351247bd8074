//! Substream derivation for reproducible campaigns.
//!
//! Every random stream in the crate is a ChaCha8 generator seeded from a
//! 64-bit value. Substreams are derived from a base seed, a purpose label,
//! and an index, so independent runs never share a stream and any single
//! run can be replayed from the campaign's base seed alone.
//!
//! The derivation is fixed and documented so third parties can reproduce
//! it: `seed = splitmix64(splitmix64(base ^ fnv1a64(label)) + index)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used for all sampling in this crate.
pub type StreamRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the 64-bit seed of the `(label, index)` substream.
pub fn derive_seed(base: u64, label: &str, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ fnv1a64(label.as_bytes())).wrapping_add(index))
}

/// Open the `(label, index)` substream of `base`.
pub fn stream(base: u64, label: &str, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(base, label, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let mut a = stream(7, "run", 3);
        let mut b = stream(7, "run", 3);
        let xs: Vec<u64> = (0..16).map(|_| a.gen()).collect();
        let ys: Vec<u64> = (0..16).map(|_| b.gen()).collect();
        assert_eq!(xs, ys);

        assert_ne!(derive_seed(7, "run", 3), derive_seed(7, "run", 4));
        assert_ne!(derive_seed(7, "run", 3), derive_seed(7, "tree", 3));
        assert_ne!(derive_seed(7, "run", 3), derive_seed(8, "run", 3));
    }

    #[test]
    fn derivation_is_pinned() {
        // Frozen values from an out-of-tree evaluation of the documented
        // scheme: changing the derivation silently breaks replays.
        assert_eq!(derive_seed(0, "", 0), 0x21fa_69a5_8f3d_62f5);
        assert_eq!(derive_seed(42, "WRS", 7), 0x269a_8018_e1f5_1373);
    }
}
