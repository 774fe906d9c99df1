//! Low-bitwidth quantization of projected gradients.
//!
//! A vector becomes `k` signed integer codes plus one `f32` scale:
//!
//! * absmax: `S = max|v|`, `q = round(alpha * v / S)` with `alpha = 2^(b-1) - 1`
//! * absmean: `S = mean|v|`, `q = clamp(round(v / S), -alpha, alpha)`
//! * sign (1-bit): `q = +1` if `v >= 0` else `-1`, `S = mean|v|` (or `max|v|`)
//!
//! Rounding is half away from zero. A zero input quantizes to all-zero codes
//! (all `+1` for sign) with `S = 1` and is flagged degenerate.

mod pack;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use pack::{pack_codes, pack_into, packed_len, unpack_codes, unpack_into};

use crate::error::{Error, Result};
use crate::projector::check_finite;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Absmax,
    Absmean,
    Sign,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Absmax => "absmax",
            Method::Absmean => "absmean",
            Method::Sign => "sign",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "absmax" => Ok(Method::Absmax),
            "absmean" => Ok(Method::Absmean),
            "sign" => Ok(Method::Sign),
            other => Err(Error::Scheme(format!("unknown quantization method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawScheme", into = "RawScheme")]
pub struct QuantScheme {
    method: Method,
    bits: u8,
}

#[derive(Serialize, Deserialize)]
struct RawScheme {
    method: Method,
    bits: u8,
}

impl TryFrom<RawScheme> for QuantScheme {
    type Error = Error;
    fn try_from(r: RawScheme) -> Result<Self> {
        QuantScheme::new(r.method, r.bits)
    }
}

impl From<QuantScheme> for RawScheme {
    fn from(s: QuantScheme) -> Self {
        RawScheme {
            method: s.method,
            bits: s.bits,
        }
    }
}

impl QuantScheme {
    pub fn new(method: Method, bits: u8) -> Result<Self> {
        if !matches!(bits, 1 | 2 | 4 | 8) {
            return Err(Error::Scheme(format!(
                "bitwidth must be one of 1, 2, 4, 8; got {bits}"
            )));
        }
        match (method, bits) {
            (Method::Sign, 1) => {}
            (Method::Sign, b) => {
                return Err(Error::Scheme(format!("scheme=sign requires 1 bit, got {b}")))
            }
            (_, 1) => return Err(Error::Scheme("1-bit requires scheme=sign".into())),
            _ => {}
        }
        Ok(Self { method, bits })
    }

    pub fn absmax(bits: u8) -> Result<Self> {
        Self::new(Method::Absmax, bits)
    }

    pub fn absmean(bits: u8) -> Result<Self> {
        Self::new(Method::Absmean, bits)
    }

    pub fn sign() -> Self {
        Self {
            method: Method::Sign,
            bits: 1,
        }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    /// Largest code magnitude, `2^(b-1) - 1`; 1 for sign.
    pub fn alpha(&self) -> i32 {
        match self.method {
            Method::Sign => 1,
            _ => (1i32 << (self.bits - 1)) - 1,
        }
    }

    pub fn has_zero_bin(&self) -> bool {
        self.method != Method::Sign
    }
}

impl fmt::Display for QuantScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}bit", self.method, self.bits)
    }
}

/// Which statistic the sign scheme records as its scale. The scale never
/// affects normalized influence scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignScale {
    #[default]
    Mean,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedVector {
    pub sample_id: String,
    pub checkpoint_id: String,
    pub scheme: QuantScheme,
    pub scale: f32,
    pub codes: Vec<i8>,
    pub degenerate: bool,
}

impl QuantizedVector {
    pub fn with_ids(mut self, sample_id: impl Into<String>, checkpoint_id: impl Into<String>) -> Self {
        self.sample_id = sample_id.into();
        self.checkpoint_id = checkpoint_id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

pub fn quantize(v: &[f32], scheme: QuantScheme) -> Result<QuantizedVector> {
    quantize_with(v, scheme, SignScale::default())
}

pub fn quantize_with(v: &[f32], scheme: QuantScheme, sign_scale: SignScale) -> Result<QuantizedVector> {
    if v.is_empty() {
        return Err(Error::Data("cannot quantize an empty vector".into()));
    }
    check_finite(v, "quantize")?;

    let max_abs = v.iter().fold(0f32, |m, x| m.max(x.abs()));
    let blank = |code: i8| QuantizedVector {
        sample_id: String::new(),
        checkpoint_id: String::new(),
        scheme,
        scale: 1.0,
        codes: vec![code; v.len()],
        degenerate: true,
    };
    if max_abs == 0.0 {
        return Ok(blank(if scheme.method == Method::Sign { 1 } else { 0 }));
    }
    let mean_abs = || (v.iter().map(|x| x.abs() as f64).sum::<f64>() / v.len() as f64) as f32;

    let alpha = scheme.alpha() as f64;
    let (scale, codes) = match scheme.method {
        Method::Absmax => {
            let s = max_abs as f64;
            let codes = v
                .iter()
                .map(|&x| (alpha * x as f64 / s).round().clamp(-alpha, alpha) as i8)
                .collect();
            (max_abs, codes)
        }
        Method::Absmean => {
            let scale = mean_abs();
            let s = scale as f64;
            let codes = v
                .iter()
                .map(|&x| (x as f64 / s).round().clamp(-alpha, alpha) as i8)
                .collect();
            (scale, codes)
        }
        Method::Sign => {
            let scale = match sign_scale {
                SignScale::Mean => mean_abs(),
                SignScale::Max => max_abs,
            };
            let codes = v.iter().map(|&x| if x >= 0.0 { 1 } else { -1 }).collect();
            (scale, codes)
        }
    };
    if !(scale > 0.0 && scale.is_finite()) {
        // Possible only when mean|v| underflows f32.
        return Err(Error::Data(format!("scale {scale} is not a positive finite f32")));
    }
    Ok(QuantizedVector {
        sample_id: String::new(),
        checkpoint_id: String::new(),
        scheme,
        scale,
        codes,
        degenerate: false,
    })
}

pub fn dequantize(qv: &QuantizedVector) -> Vec<f32> {
    let step = match qv.scheme.method {
        Method::Absmax => qv.scale as f64 / qv.scheme.alpha() as f64,
        Method::Absmean | Method::Sign => qv.scale as f64,
    };
    qv.codes.iter().map(|&c| (c as f64 * step) as f32).collect()
}

/// Fraction of codes equal to zero.
pub fn zero_bin_fraction(qv: &QuantizedVector) -> Result<f64> {
    zero_bin_fraction_batch(std::iter::once(qv))
}

/// Fraction of zero codes pooled over every vector in `batch`.
pub fn zero_bin_fraction_batch<'a>(batch: impl IntoIterator<Item = &'a QuantizedVector>) -> Result<f64> {
    let (mut zeros, mut total) = (0usize, 0usize);
    for qv in batch {
        if !qv.scheme.has_zero_bin() {
            return Err(Error::Unsupported(
                "sign quantization has no zero bin".into(),
            ));
        }
        zeros += qv.codes.iter().filter(|&&c| c == 0).count();
        total += qv.codes.len();
    }
    if total == 0 {
        return Err(Error::Argument("no codes to analyze".into()));
    }
    Ok(zeros as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_invariants() {
        assert!(QuantScheme::absmax(1).is_err());
        assert!(QuantScheme::absmean(1).is_err());
        assert!(QuantScheme::new(Method::Sign, 2).is_err());
        assert!(QuantScheme::absmax(3).is_err());
        assert!(QuantScheme::absmax(16).is_err());
        assert_eq!(QuantScheme::absmax(2).unwrap().alpha(), 1);
        assert_eq!(QuantScheme::absmax(4).unwrap().alpha(), 7);
        assert_eq!(QuantScheme::absmax(8).unwrap().alpha(), 127);
        assert_eq!(QuantScheme::sign().alpha(), 1);
        let err = QuantScheme::absmax(1).unwrap_err().to_string();
        assert!(err.contains("1-bit requires scheme=sign"), "{err}");
    }

    #[test]
    fn scheme_serde_validates() {
        let s: QuantScheme = serde_json::from_str(r#"{"method":"absmax","bits":4}"#).unwrap();
        assert_eq!(s, QuantScheme::absmax(4).unwrap());
        assert!(serde_json::from_str::<QuantScheme>(r#"{"method":"absmax","bits":1}"#).is_err());
    }

    #[test]
    fn absmax_two_bit_example() {
        let q = quantize(&[0.6, -1.0, 0.2], QuantScheme::absmax(2).unwrap()).unwrap();
        assert_eq!(q.codes, vec![1, -1, 0]);
        assert_eq!(q.scale, 1.0);
        assert!(!q.degenerate);
    }

    #[test]
    fn absmax_eight_bit_rounds_half_away() {
        let q = quantize(&[1.0, -0.5, 0.0], QuantScheme::absmax(8).unwrap()).unwrap();
        assert_eq!(q.codes, vec![127, -64, 0]);
        assert_eq!(q.scale, 1.0);
    }

    #[test]
    fn sign_example() {
        let q = quantize(&[0.3, -0.2, 0.7], QuantScheme::sign()).unwrap();
        assert_eq!(q.codes, vec![1, -1, 1]);
        assert!((q.scale - 0.4).abs() < 1e-7);
        let q = quantize_with(&[0.3, -0.2, 0.7], QuantScheme::sign(), SignScale::Max).unwrap();
        assert_eq!(q.scale, 0.7);
        assert_eq!(quantize(&[0.0, -1.0], QuantScheme::sign()).unwrap().codes, vec![1, -1]);
    }

    #[test]
    fn absmean_clamps() {
        // mean|v| = 1.0; 3.0 would round to 3 but clamps to alpha = 1 at b=2.
        let q = quantize(&[3.0, -0.4, 0.5, -0.1], QuantScheme::absmean(2).unwrap()).unwrap();
        assert_eq!(q.scale, 1.0);
        assert_eq!(q.codes, vec![1, 0, 1, 0]);
        let q = quantize(&[3.0, -0.4, 0.5, -0.1], QuantScheme::absmean(4).unwrap()).unwrap();
        assert_eq!(q.codes, vec![3, 0, 1, 0]);
    }

    #[test]
    fn zero_vector_is_degenerate() {
        for scheme in [QuantScheme::absmax(4).unwrap(), QuantScheme::absmean(2).unwrap()] {
            let q = quantize(&[0.0; 5], scheme).unwrap();
            assert!(q.degenerate);
            assert_eq!(q.codes, vec![0; 5]);
            assert_eq!(q.scale, 1.0);
            assert_eq!(dequantize(&q), vec![0.0; 5]);
        }
        let q = quantize(&[0.0; 3], QuantScheme::sign()).unwrap();
        assert!(q.degenerate);
        assert_eq!(q.codes, vec![1; 3]);
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        let s = QuantScheme::absmax(8).unwrap();
        assert!(matches!(quantize(&[1.0, f32::NAN], s), Err(Error::Data(_))));
        assert!(matches!(quantize(&[f32::NEG_INFINITY], s), Err(Error::Data(_))));
        assert!(matches!(quantize(&[], s), Err(Error::Data(_))));
    }

    #[test]
    fn dequantize_examples() {
        let q = QuantizedVector {
            sample_id: String::new(),
            checkpoint_id: String::new(),
            scheme: QuantScheme::absmax(2).unwrap(),
            scale: 1.0,
            codes: vec![1, -1, 0],
            degenerate: false,
        };
        assert_eq!(dequantize(&q), vec![1.0, -1.0, 0.0]);
        let mut q8 = q.clone();
        q8.scheme = QuantScheme::absmax(8).unwrap();
        q8.scale = 127.0;
        assert_eq!(dequantize(&q8), vec![1.0, -1.0, 0.0]);
        let mut qm = q;
        qm.scheme = QuantScheme::absmean(2).unwrap();
        qm.scale = 0.5;
        assert_eq!(dequantize(&qm), vec![0.5, -0.5, 0.0]);
    }

    #[test]
    fn zero_bin_counts() {
        let q = QuantizedVector {
            sample_id: String::new(),
            checkpoint_id: String::new(),
            scheme: QuantScheme::absmax(2).unwrap(),
            scale: 1.0,
            codes: vec![1, -1, 0, 0],
            degenerate: false,
        };
        assert_eq!(zero_bin_fraction(&q).unwrap(), 0.5);
        let s = quantize(&[1.0, -1.0], QuantScheme::sign()).unwrap();
        assert!(matches!(zero_bin_fraction(&s), Err(Error::Unsupported(_))));
    }
}
