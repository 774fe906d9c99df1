//! Bit-packing of signed codes.
//!
//! Fields are laid out LSB-first in little-endian bit order. For `b = 1` a set
//! bit means `+1` and a clear bit `-1`; for `b` in {2, 4, 8} each field is a
//! `b`-bit two's-complement integer. Since `b` divides 8, no field straddles a
//! byte boundary. Trailing bits of the last byte are zero.

use crate::error::{Error, Result};

pub fn packed_len(k: usize, bits: u8) -> usize {
    (k * bits as usize).div_ceil(8)
}

fn check_bits(bits: u8) -> Result<()> {
    match bits {
        1 | 2 | 4 | 8 => Ok(()),
        b => Err(Error::Scheme(format!("unsupported bitwidth {b}"))),
    }
}

pub fn pack_codes(codes: &[i8], bits: u8) -> Result<Vec<u8>> {
    let mut out = vec![0u8; packed_len(codes.len(), bits)];
    pack_into(codes, bits, &mut out)?;
    Ok(out)
}

/// Packs into `out`, which must be exactly `packed_len(codes.len(), bits)` long.
pub fn pack_into(codes: &[i8], bits: u8, out: &mut [u8]) -> Result<()> {
    check_bits(bits)?;
    if out.len() != packed_len(codes.len(), bits) {
        return Err(Error::Encoding(format!(
            "output buffer holds {} bytes, need {}",
            out.len(),
            packed_len(codes.len(), bits)
        )));
    }
    out.fill(0);
    match bits {
        1 => {
            for (m, &c) in codes.iter().enumerate() {
                match c {
                    1 => out[m / 8] |= 1 << (m % 8),
                    -1 => {}
                    _ => return Err(out_of_range(m, c, bits)),
                }
            }
        }
        8 => {
            for (m, (&c, o)) in codes.iter().zip(out.iter_mut()).enumerate() {
                if c == i8::MIN {
                    return Err(out_of_range(m, c, bits));
                }
                *o = c as u8;
            }
        }
        _ => {
            let b = bits as usize;
            let alpha = (1i8 << (b - 1)) - 1;
            let mask = (1u8 << b) - 1;
            let per_byte = 8 / b;
            for (m, &c) in codes.iter().enumerate() {
                if c < -alpha || c > alpha {
                    return Err(out_of_range(m, c, bits));
                }
                out[m / per_byte] |= ((c as u8) & mask) << ((m % per_byte) * b);
            }
        }
    }
    Ok(())
}

fn out_of_range(index: usize, code: i8, bits: u8) -> Error {
    Error::Encoding(format!("code {code} at index {index} out of range for {bits}-bit field"))
}

pub fn unpack_codes(bytes: &[u8], k: usize, bits: u8) -> Result<Vec<i8>> {
    let mut out = vec![0i8; k];
    unpack_into(bytes, bits, &mut out)?;
    Ok(out)
}

/// Unpacks `out.len()` codes from `bytes`.
pub fn unpack_into(bytes: &[u8], bits: u8, out: &mut [i8]) -> Result<()> {
    check_bits(bits)?;
    let need = packed_len(out.len(), bits);
    if bytes.len() < need {
        return Err(Error::Decoding(format!(
            "truncated buffer: {} bytes, need {need} for {} {bits}-bit codes",
            bytes.len(),
            out.len()
        )));
    }
    match bits {
        1 => {
            for (m, o) in out.iter_mut().enumerate() {
                *o = if (bytes[m / 8] >> (m % 8)) & 1 == 1 { 1 } else { -1 };
            }
        }
        8 => {
            for (m, (o, &byte)) in out.iter_mut().zip(bytes).enumerate() {
                if byte == 0x80 {
                    return Err(invalid_field(m, bits));
                }
                *o = byte as i8;
            }
        }
        _ => {
            let b = bits as u32;
            let per_byte = 8 / b as usize;
            let mask = (1u8 << b) - 1;
            let min_field = 1u8 << (b - 1);
            for (m, o) in out.iter_mut().enumerate() {
                let field = (bytes[m / per_byte] >> ((m % per_byte) as u32 * b)) & mask;
                if field == min_field {
                    return Err(invalid_field(m, bits));
                }
                // Sign-extend the b-bit field.
                *o = ((field << (8 - b)) as i8) >> (8 - b);
            }
        }
    }
    Ok(())
}

fn invalid_field(index: usize, bits: u8) -> Error {
    Error::Decoding(format!(
        "field {index} holds the reserved minimum {bits}-bit pattern"
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_bit_layout() {
        let codes = [1, -1, 1, 1, -1, -1, -1, -1];
        assert_eq!(pack_codes(&codes, 1).unwrap(), vec![0x0D]);
        assert_eq!(unpack_codes(&[0x0D], 8, 1).unwrap(), codes);
    }

    #[test]
    fn eight_bit_is_twos_complement() {
        assert_eq!(pack_codes(&[127, -64], 8).unwrap(), vec![0x7F, 0xC0]);
    }

    #[test]
    fn two_and_four_bit_layout() {
        // 2-bit fields: 1 -> 01, -1 -> 11, 0 -> 00, LSB first.
        assert_eq!(pack_codes(&[1, -1, 0, 1], 2).unwrap(), vec![0b01_00_11_01]);
        // 4-bit: 7 -> 0111, -3 -> 1101.
        assert_eq!(pack_codes(&[7, -3, 1], 4).unwrap(), vec![0xD7, 0x01]);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(matches!(pack_codes(&[0], 1), Err(Error::Encoding(_))));
        assert!(matches!(pack_codes(&[2], 2), Err(Error::Encoding(_))));
        assert!(matches!(pack_codes(&[-2], 2), Err(Error::Encoding(_))));
        assert!(matches!(pack_codes(&[8], 4), Err(Error::Encoding(_))));
        assert!(matches!(pack_codes(&[-128], 8), Err(Error::Encoding(_))));
        assert!(matches!(pack_codes(&[1], 3), Err(Error::Scheme(_))));
    }

    #[test]
    fn rejects_truncated_and_reserved() {
        assert!(matches!(unpack_codes(&[0xFF], 9, 1), Err(Error::Decoding(_))));
        assert!(matches!(unpack_codes(&[0x02], 1, 2), Err(Error::Decoding(_))));
        assert!(matches!(unpack_codes(&[0x80], 1, 8), Err(Error::Decoding(_))));
    }

    #[test]
    fn packed_lengths() {
        assert_eq!(packed_len(8, 1), 1);
        assert_eq!(packed_len(9, 1), 2);
        assert_eq!(packed_len(3, 4), 2);
        assert_eq!(packed_len(8192, 2), 2048);
        assert_eq!(packed_len(0, 8), 0);
    }

    fn codes_for(bits: u8) -> impl Strategy<Value = Vec<i8>> {
        let alpha = ((1i16 << (bits - 1)) - 1) as i8;
        let elem = if bits == 1 {
            prop_oneof![Just(-1i8), Just(1i8)].boxed()
        } else {
            (-alpha..=alpha).boxed()
        };
        prop::collection::vec(elem, 0..200)
    }

    proptest! {
        #[test]
        fn roundtrip_identity(
            (bits, codes) in prop_oneof![Just(1u8), Just(2u8), Just(4u8), Just(8u8)]
                .prop_flat_map(|b| (Just(b), codes_for(b)))
        ) {
            let bytes = pack_codes(&codes, bits).unwrap();
            prop_assert_eq!(bytes.len(), packed_len(codes.len(), bits));
            prop_assert_eq!(unpack_codes(&bytes, codes.len(), bits).unwrap(), codes);
        }
    }
}
