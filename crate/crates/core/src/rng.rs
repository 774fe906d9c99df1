//! Counter-based random bits.
//!
//! Every value is a pure function of a key and a small tuple of counters, so
//! any element of a random stream can be regenerated without replaying the
//! stream. Mixing uses the SplitMix64 finalizer chained over the counters.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const K_ROW: u64 = 0xD1B5_4A32_D192_ED03;
const K_COL: u64 = 0x8CB9_2BA7_2F3D_8DD7;

#[inline(always)]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64 random bits addressed by `(key, a, b)`.
#[inline(always)]
pub fn hash3(key: u64, a: u64, b: u64) -> u64 {
    let h = mix64(key.wrapping_add(GOLDEN));
    let h = mix64(h ^ a.wrapping_mul(K_ROW).wrapping_add(GOLDEN));
    mix64(h ^ b.wrapping_mul(K_COL).wrapping_add(K_ROW))
}

/// Uniform in `[0, 1)` from the top 53 bits.
#[inline(always)]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in `(0, 1]`, safe as a logarithm argument.
#[inline(always)]
pub fn open_unit_f64(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Independent ChaCha stream for sub-stream `(tag, a, b)` of `seed`.
pub fn substream(seed: u64, tag: u64, a: u64, b: u64) -> ChaCha8Rng {
    let key = hash3(seed ^ mix64(tag), a, b);
    ChaCha8Rng::seed_from_u64(key)
}
