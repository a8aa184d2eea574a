//! Seed derivation and the crate-wide RNG type.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Portable, seedable generator used by every lab.
pub type LabRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> LabRng {
    LabRng::seed_from_u64(seed)
}

/// One step of the SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `index` under `root`.
pub fn derive_seed(root: u64, index: u64) -> u64 {
    splitmix64(root ^ splitmix64(index))
}
