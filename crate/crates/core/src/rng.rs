//! Counter-based seed splitting.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] whose key is a
//! derived seed and whose stream id is the index of the task (trajectory,
//! replicate, pair). Results therefore never depend on how work is
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed from `seed` and a label.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    mix(mix(seed) ^ label.rotate_left(17) ^ 0xD1B5_4A32_D192_ED03)
}

/// The random stream for task `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
