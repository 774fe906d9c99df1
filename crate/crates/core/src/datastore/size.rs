use crate::error::{Error, Result};

/// Bytes needed to store `n` vectors of `k` `bits`-bit codes at each of
/// `checkpoints` checkpoints, plus one `f32` scale per vector when
/// `include_scales` is set. Header and index bytes are not counted.
pub fn estimate_size(n: u64, k: u64, bits: u32, checkpoints: u64, include_scales: bool) -> Result<u64> {
    if n == 0 || k == 0 || bits == 0 || checkpoints == 0 {
        return Err(Error::Argument(format!(
            "all size inputs must be positive (n={n}, k={k}, bits={bits}, checkpoints={checkpoints})"
        )));
    }
    let overflow = || Error::Argument("size estimate overflows u64".into());
    let code_bytes = k
        .checked_mul(bits as u64)
        .ok_or_else(overflow)?
        .div_ceil(8);
    let per_vector = if include_scales {
        code_bytes.checked_add(4).ok_or_else(overflow)?
    } else {
        code_bytes
    };
    n.checked_mul(checkpoints)
        .and_then(|v| v.checked_mul(per_vector))
        .ok_or_else(overflow)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(estimate_size(270_000, 8192, 16, 4, false).unwrap(), 17_694_720_000);
        assert_eq!(estimate_size(1, 8, 1, 1, true).unwrap(), 5);
        assert_eq!(estimate_size(3, 8, 1, 1, true).unwrap(), 15);
    }

    #[test]
    fn halving_bits_halves_bytes() {
        for b in [16, 8, 4, 2] {
            let hi = estimate_size(270_000, 8192, b, 4, false).unwrap();
            let lo = estimate_size(270_000, 8192, b / 2, 4, false).unwrap();
            assert_eq!(hi, 2 * lo);
        }
    }

    #[test]
    fn rejects_zero_and_overflow() {
        assert!(matches!(estimate_size(0, 8, 1, 1, true), Err(Error::Argument(_))));
        assert!(matches!(estimate_size(1, 0, 1, 1, true), Err(Error::Argument(_))));
        assert!(matches!(estimate_size(1, 8, 0, 1, true), Err(Error::Argument(_))));
        assert!(matches!(estimate_size(1, 8, 1, 0, true), Err(Error::Argument(_))));
        assert!(matches!(estimate_size(u64::MAX, u64::MAX, 8, 2, false), Err(Error::Argument(_))));
    }
}
