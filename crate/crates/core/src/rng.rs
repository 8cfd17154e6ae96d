//! Portable, explicitly specified random streams.
//!
//! Every stochastic step draws from a ChaCha8 generator (`rand_chacha`) whose
//! 64-bit seed is derived from a base seed and a list of integer tags by
//! folding each tag through the SplitMix64 finalizer:
//!
//! ```text
//! h = splitmix(base ^ 0x9E3779B97F4A7C15)
//! for tag in tags: h = splitmix(h ^ splitmix(tag + 0x632BE59BD9B4E019))
//! ```
//!
//! ChaCha8 output and SplitMix64 are fully specified integer algorithms, so a
//! stream depends only on `(base, tags)`; it does not depend on platform,
//! thread count, or the order in which streams are consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const TAG_SALT: u64 = 0x632B_E59B_D9B4_E019;

/// Stream tags. Kept stable: changing any value changes every output.
pub mod tag {
    pub const SIM_INIT: u64 = 1;
    pub const SIM_NOISE: u64 = 2;
    pub const PARTICLE_INIT: u64 = 10;
    pub const JITTER: u64 = 11;
    pub const RESAMPLE: u64 = 12;
    pub const GRID_RUN: u64 = 20;
    pub const DATASET: u64 = 30;
    pub const HUMAN: u64 = 31;
    pub const FIXTURE: u64 = 40;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix(base ^ GOLDEN), |h, &t| {
        splitmix(h ^ splitmix(t.wrapping_add(TAG_SALT)))
    })
}

/// Stable 64-bit tag for a text label (FNV-1a over its UTF-8 bytes).
pub fn label_tag(label: &str) -> u64 {
    label
        .bytes()
        .fold(0xCBF2_9CE4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01B3))
}

pub fn stream(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derivation_is_stable() {
        // Frozen values: a change here silently changes every stored result.
        assert_eq!(derive_seed(0, &[]), 0x6E78_9E6A_A1B9_65F4);
        let a = derive_seed(42, &[tag::JITTER, 3, 7]);
        assert_eq!(a, 0x00FD_4ACB_20B0_0688);
        assert_ne!(a, derive_seed(42, &[tag::JITTER, 7, 3]));
        assert_ne!(a, derive_seed(43, &[tag::JITTER, 3, 7]));
    }

    #[test]
    fn label_tags_differ() {
        assert_eq!(label_tag(""), 0xCBF2_9CE4_8422_2325);
        assert_ne!(label_tag("planning"), label_tag("search"));
    }

    #[test]
    fn streams_reproduce() {
        let xs: Vec<u64> = stream(9, &[1]).random_iter().take(8).collect();
        let ys: Vec<u64> = stream(9, &[1]).random_iter().take(8).collect();
        assert_eq!(xs, ys);
    }
}
