//! Per-checkpoint vector sets laid out for fast pairwise inner products.

use crate::datastore::{Store, StoreKind};
use crate::error::{Error, Result};
use crate::quantizer::{quantize, unpack_into, Method, QuantScheme, QuantizedVector};

use super::kernel::{bytes_to_words, dot_f32, dot_i8, dot_sign, norm_f32, norm_i8, sign_words};

#[derive(Debug, Clone)]
enum Data {
    /// Sign codes as bits, `words` per vector.
    Bits { words: usize, data: Vec<u64> },
    Codes { data: Vec<i8> },
    Float { data: Vec<f32> },
}

/// `n` vectors of length `k`, with Euclidean norms precomputed.
#[derive(Debug, Clone)]
pub struct PreparedSet {
    k: usize,
    scheme: Option<QuantScheme>,
    data: Data,
    norms: Vec<f64>,
    degenerate: Vec<bool>,
}

impl PreparedSet {
    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Quantization scheme, or `None` for full-precision vectors.
    pub fn scheme(&self) -> Option<QuantScheme> {
        self.scheme
    }

    pub fn is_degenerate(&self, i: usize) -> bool {
        self.degenerate[i]
    }

    pub fn degenerate_count(&self) -> usize {
        self.degenerate.iter().filter(|&&d| d).count()
    }

    pub fn norm(&self, i: usize) -> f64 {
        self.norms[i]
    }

    /// Raw inner product between vector `i` of `self` and vector `j` of `other`.
    #[inline]
    pub fn dot(&self, i: usize, other: &PreparedSet, j: usize) -> f64 {
        let k = self.k;
        match (&self.data, &other.data) {
            (Data::Bits { words, data: a }, Data::Bits { data: b, .. }) => {
                let w = *words;
                dot_sign(&a[i * w..(i + 1) * w], &b[j * w..(j + 1) * w], k) as f64
            }
            (Data::Codes { data: a }, Data::Codes { data: b }) => {
                dot_i8(&a[i * k..(i + 1) * k], &b[j * k..(j + 1) * k]) as f64
            }
            (Data::Float { data: a }, Data::Float { data: b }) => {
                dot_f32(&a[i * k..(i + 1) * k], &b[j * k..(j + 1) * k])
            }
            _ => unreachable!("compatibility is checked before scoring"),
        }
    }

    pub(crate) fn check_compatible(&self, other: &PreparedSet, context: &str) -> Result<()> {
        if self.k != other.k {
            return Err(Error::Dimension {
                context: context.to_string(),
                expected: self.k,
                actual: other.k,
            });
        }
        let same_layout = matches!(
            (&self.data, &other.data),
            (Data::Bits { .. }, Data::Bits { .. })
                | (Data::Codes { .. }, Data::Codes { .. })
                | (Data::Float { .. }, Data::Float { .. })
        );
        if self.scheme != other.scheme || !same_layout {
            let show = |s: Option<QuantScheme>| s.map_or("float32".to_string(), |s| s.to_string());
            return Err(Error::Scheme(format!(
                "{context}: incompatible vector encodings {} and {}",
                show(self.scheme),
                show(other.scheme)
            )));
        }
        Ok(())
    }

    fn empty(k: usize, scheme: Option<QuantScheme>, n: usize) -> Self {
        let data = match scheme {
            None => Data::Float {
                data: Vec::with_capacity(n * k),
            },
            Some(s) if s.method() == Method::Sign => Data::Bits {
                words: k.div_ceil(64),
                data: Vec::with_capacity(n * k.div_ceil(64)),
            },
            Some(_) => Data::Codes {
                data: Vec::with_capacity(n * k),
            },
        };
        Self {
            k,
            scheme,
            data,
            norms: Vec::with_capacity(n),
            degenerate: Vec::with_capacity(n),
        }
    }

    fn push_float(&mut self, values: &[f32]) {
        let Data::Float { data } = &mut self.data else {
            unreachable!()
        };
        data.extend_from_slice(values);
        let n = norm_f32(values);
        self.norms.push(n);
        self.degenerate.push(n == 0.0);
    }

    fn push_quantized(&mut self, qv: &QuantizedVector) {
        match &mut self.data {
            Data::Bits { data, .. } => {
                data.extend(sign_words(&qv.codes));
                self.norms.push((self.k as f64).sqrt());
            }
            Data::Codes { data } => {
                data.extend_from_slice(&qv.codes);
                self.norms.push(norm_i8(&qv.codes));
            }
            Data::Float { .. } => unreachable!(),
        }
        self.degenerate.push(qv.degenerate || self.norms.last() == Some(&0.0));
    }

    /// Full-precision vectors, each `k` long.
    pub fn from_float<'a>(k: usize, vectors: impl IntoIterator<Item = &'a [f32]>) -> Result<Self> {
        let mut set = Self::empty(k, None, 0);
        for (i, v) in vectors.into_iter().enumerate() {
            if v.len() != k {
                return Err(Error::Dimension {
                    context: format!("vector {i}"),
                    expected: k,
                    actual: v.len(),
                });
            }
            set.push_float(v);
        }
        Ok(set)
    }

    /// Quantized vectors sharing one scheme and length.
    pub fn from_quantized<'a>(
        scheme: QuantScheme,
        k: usize,
        vectors: impl IntoIterator<Item = &'a QuantizedVector>,
    ) -> Result<Self> {
        let mut set = Self::empty(k, Some(scheme), 0);
        for qv in vectors {
            if qv.scheme != scheme {
                return Err(Error::Scheme(format!(
                    "vector {:?} uses {}, expected {scheme}",
                    qv.sample_id, qv.scheme
                )));
            }
            if qv.codes.len() != k {
                return Err(Error::Dimension {
                    context: format!("vector {:?}", qv.sample_id),
                    expected: k,
                    actual: qv.codes.len(),
                });
            }
            set.push_quantized(qv);
        }
        Ok(set)
    }

    /// Quantizes full-precision vectors with `scheme` on the way in.
    pub fn quantizing<'a>(
        scheme: QuantScheme,
        k: usize,
        vectors: impl IntoIterator<Item = &'a [f32]>,
    ) -> Result<Self> {
        let mut set = Self::empty(k, Some(scheme), 0);
        for (i, v) in vectors.into_iter().enumerate() {
            if v.len() != k {
                return Err(Error::Dimension {
                    context: format!("vector {i}"),
                    expected: k,
                    actual: v.len(),
                });
            }
            set.push_quantized(&quantize(v, scheme)?);
        }
        Ok(set)
    }

    /// Loads the vectors of `store` in the order given by `order` (indices
    /// into the store). When `quantize_to` is set and the store holds float
    /// vectors, they are quantized with that scheme.
    pub fn from_store(store: &Store, order: &[usize], quantize_to: Option<QuantScheme>) -> Result<Self> {
        let k = store.k();
        let rl = store.record_len();
        let payload = store.read_payload()?;
        let record = |idx: usize| &payload[idx * rl..(idx + 1) * rl];
        let floats = |raw: &[u8]| -> Vec<f32> {
            raw.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect()
        };
        match (store.kind(), quantize_to) {
            (StoreKind::Float32, None) => {
                let mut set = Self::empty(k, None, order.len());
                for &idx in order {
                    set.push_float(&floats(record(idx)));
                }
                Ok(set)
            }
            (StoreKind::Float32, Some(scheme)) => {
                let mut set = Self::empty(k, Some(scheme), order.len());
                for &idx in order {
                    let values = floats(record(idx));
                    let qv = quantize(&values, scheme)?;
                    set.push_quantized(&qv);
                }
                Ok(set)
            }
            (StoreKind::Quantized { scheme }, target) => {
                if let Some(t) = target {
                    if t != scheme {
                        return Err(Error::Scheme(format!(
                            "{} holds {scheme} codes, expected {t}",
                            store.path().display()
                        )));
                    }
                }
                let mut set = Self::empty(k, Some(scheme), order.len());
                let mut codes = vec![0i8; k];
                for &idx in order {
                    let raw = &record(idx)[4..];
                    match &mut set.data {
                        Data::Bits { words, data } => {
                            let start = data.len();
                            data.resize(start + *words, 0);
                            bytes_to_words(raw, &mut data[start..]);
                            set.norms.push((k as f64).sqrt());
                        }
                        Data::Codes { data } => {
                            unpack_into(raw, scheme.bits(), &mut codes)?;
                            data.extend_from_slice(&codes);
                            set.norms.push(norm_i8(&codes));
                        }
                        Data::Float { .. } => unreachable!(),
                    }
                    let zero_norm = set.norms.last() == Some(&0.0);
                    set.degenerate.push(store.is_degenerate(idx) || zero_norm);
                }
                Ok(set)
            }
        }
    }

    /// Concatenates sets with identical encodings.
    pub fn concat(parts: &[PreparedSet]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Argument("nothing to concatenate".into()))?;
        let n: usize = parts.iter().map(|p| p.len()).sum();
        let mut out = Self::empty(first.k, first.scheme, n);
        for p in parts {
            first.check_compatible(p, "concatenation")?;
            match (&mut out.data, &p.data) {
                (Data::Bits { data, .. }, Data::Bits { data: src, .. }) => data.extend_from_slice(src),
                (Data::Codes { data }, Data::Codes { data: src }) => data.extend_from_slice(src),
                (Data::Float { data }, Data::Float { data: src }) => data.extend_from_slice(src),
                _ => unreachable!(),
            }
            out.norms.extend_from_slice(&p.norms);
            out.degenerate.extend_from_slice(&p.degenerate);
        }
        Ok(out)
    }
}
