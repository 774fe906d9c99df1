//! Inner-product kernels over prepared vectors.
//!
//! Sign codes are kept as bit vectors (bit set = +1), so for two `k`-long
//! ±1 vectors `<a, b> = k - 2 * popcount(a ^ b)`. Wider codes are kept as
//! `i8` and summed in `i32`, which is exact for every supported bitwidth.
//! Float inputs accumulate in `f64` over eight fixed lanes.

#[cfg(target_arch = "x86_64")]
use std::sync::OnceLock;

#[inline]
fn xor_popcount_portable(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "popcnt")]
unsafe fn xor_popcount_popcnt(a: &[u64], b: &[u64]) -> u32 {
    xor_popcount_portable(a, b)
}

#[inline]
fn dot_i8_portable(a: &[i8], b: &[i8]) -> i32 {
    a.iter().zip(b).map(|(&x, &y)| x as i32 * y as i32).sum()
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn dot_i8_avx2(a: &[i8], b: &[i8]) -> i32 {
    // Integer addition is associative, so the vectorized reduction is exact.
    let mut acc = [0i32; 16];
    let mut ca = a.chunks_exact(16);
    let mut cb = b.chunks_exact(16);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for j in 0..16 {
            acc[j] += x[j] as i32 * y[j] as i32;
        }
    }
    acc.iter().sum::<i32>() + dot_i8_portable(ca.remainder(), cb.remainder())
}

#[cfg(target_arch = "x86_64")]
struct Features {
    popcnt: bool,
    avx2: bool,
}

#[cfg(target_arch = "x86_64")]
fn features() -> &'static Features {
    static F: OnceLock<Features> = OnceLock::new();
    F.get_or_init(|| Features {
        popcnt: is_x86_feature_detected!("popcnt"),
        avx2: is_x86_feature_detected!("avx2"),
    })
}

/// Number of differing bits between two equally long bit vectors.
#[inline]
pub fn xor_popcount(a: &[u64], b: &[u64]) -> u32 {
    debug_assert_eq!(a.len(), b.len());
    #[cfg(target_arch = "x86_64")]
    if features().popcnt {
        // SAFETY: the CPU supports popcnt.
        return unsafe { xor_popcount_popcnt(a, b) };
    }
    xor_popcount_portable(a, b)
}

/// Inner product of two ±1 vectors of length `k` stored as bits.
#[inline]
pub fn dot_sign(a: &[u64], b: &[u64], k: usize) -> i64 {
    k as i64 - 2 * xor_popcount(a, b) as i64
}

#[inline]
pub fn dot_i8(a: &[i8], b: &[i8]) -> i32 {
    debug_assert_eq!(a.len(), b.len());
    #[cfg(target_arch = "x86_64")]
    if features().avx2 {
        // SAFETY: the CPU supports avx2.
        return unsafe { dot_i8_avx2(a, b) };
    }
    dot_i8_portable(a, b)
}

/// Inner product accumulated in f64 over 8 fixed lanes, so the summation
/// order (and result) is the same on every target.
#[inline(always)]
fn dot_f32_portable(a: &[f32], b: &[f32]) -> f64 {
    let mut lanes = [0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(&x, &y)| x as f64 * y as f64)
        .sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            lanes[l] += x[l] as f64 * y[l] as f64;
        }
    }
    let pairs = [lanes[0] + lanes[4], lanes[1] + lanes[5], lanes[2] + lanes[6], lanes[3] + lanes[7]];
    (pairs[0] + pairs[2]) + (pairs[1] + pairs[3]) + tail
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn dot_f32_avx2(a: &[f32], b: &[f32]) -> f64 {
    dot_f32_portable(a, b)
}

#[inline]
pub fn dot_f32(a: &[f32], b: &[f32]) -> f64 {
    #[cfg(target_arch = "x86_64")]
    if features().avx2 {
        // SAFETY: the CPU supports avx2.
        return unsafe { dot_f32_avx2(a, b) };
    }
    dot_f32_portable(a, b)
}

pub fn norm_i8(a: &[i8]) -> f64 {
    (dot_i8(a, a) as f64).sqrt()
}

pub fn norm_f32(a: &[f32]) -> f64 {
    dot_f32(a, a).sqrt()
}

/// Packs ±1 codes into little-endian 64-bit words, bit set = +1.
pub fn sign_words(codes: &[i8]) -> Vec<u64> {
    let mut words = vec![0u64; codes.len().div_ceil(64)];
    for (m, &c) in codes.iter().enumerate() {
        if c > 0 {
            words[m / 64] |= 1 << (m % 64);
        }
    }
    words
}

/// Reinterprets LSB-first packed 1-bit codes as 64-bit words.
pub fn bytes_to_words(bytes: &[u8], out: &mut [u64]) {
    out.fill(0);
    for (w, chunk) in out.iter_mut().zip(bytes.chunks(8)) {
        let mut buf = [0u8; 8];
        buf[..chunk.len()].copy_from_slice(chunk);
        *w = u64::from_le_bytes(buf);
    }
}
