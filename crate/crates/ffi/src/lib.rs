//! C ABI for the projector, quantizer and store reader.
//!
//! Every fallible function returns a [`QgStatus`]; on failure the message is
//! available from [`qg_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function. Panics never cross the
//! boundary; they are reported as `QG_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use qgrad::datastore::{estimate_size, Store, StoreKind, StoredVector};
use qgrad::projector::{Distribution, ProjectionSpec, Projector};
use qgrad::quantizer::{pack_into, packed_len, quantize, unpack_into, Method, QuantScheme};
use qgrad::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QgStatus {
    Ok = 0,
    Config = 1,
    Dimension = 2,
    Data = 3,
    Scheme = 4,
    Format = 5,
    Corruption = 6,
    Lookup = 7,
    Io = 8,
    Argument = 9,
    NullPointer = 10,
    Panic = 11,
}

pub const QG_DISTRIBUTION_RADEMACHER: u32 = 0;
pub const QG_DISTRIBUTION_GAUSSIAN: u32 = 1;

pub const QG_METHOD_ABSMAX: u32 = 0;
pub const QG_METHOD_ABSMEAN: u32 = 1;
pub const QG_METHOD_SIGN: u32 = 2;

/// Opaque projector handle.
pub struct QgProjector {
    inner: Projector,
}

/// Opaque read-only store handle.
pub struct QgStore {
    inner: Store,
    ids: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> QgStatus {
    match e {
        Error::Config(_) => QgStatus::Config,
        Error::Dimension { .. } => QgStatus::Dimension,
        Error::Data(_) | Error::Degenerate(_) | Error::Coverage { .. } | Error::Alignment(_) => QgStatus::Data,
        Error::Scheme(_) | Error::Encoding(_) | Error::Decoding(_) | Error::Unsupported(_) => QgStatus::Scheme,
        Error::Format { .. } => QgStatus::Format,
        Error::Corruption { .. } => QgStatus::Corruption,
        Error::Lookup(_) => QgStatus::Lookup,
        Error::Io { .. } | Error::Write(_) => QgStatus::Io,
        Error::Argument(_) => QgStatus::Argument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), QgFail>) -> QgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QgStatus::Ok,
        Ok(Err(QgFail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            QgStatus::Panic
        }
    }
}

struct QgFail(QgStatus, String);

impl From<Error> for QgFail {
    fn from(e: Error) -> Self {
        QgFail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> QgFail {
    QgFail(QgStatus::NullPointer, format!("{what} is null"))
}

/// Borrows `len` elements at `p`; a null pointer is allowed only when `len == 0`.
unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], QgFail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], QgFail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn scheme(method: u32, bits: u8) -> Result<QuantScheme, QgFail> {
    let m = match method {
        QG_METHOD_ABSMAX => Method::Absmax,
        QG_METHOD_ABSMEAN => Method::Absmean,
        QG_METHOD_SIGN => Method::Sign,
        other => return Err(QgFail(QgStatus::Argument, format!("unknown method {other}"))),
    };
    Ok(QuantScheme::new(m, bits)?)
}

fn check_len(context: &str, expected: usize, actual: usize) -> Result<(), QgFail> {
    if expected != actual {
        return Err(Error::Dimension {
            context: context.into(),
            expected,
            actual,
        }
        .into());
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn qg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a projector for `R: R^input_dim -> R^output_dim`; `distribution`
/// is one of the `QG_DISTRIBUTION_*` constants.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn qg_projector_new(
    seed: u64,
    input_dim: usize,
    output_dim: usize,
    distribution: u32,
    out: *mut *mut QgProjector,
) -> QgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let dist = match distribution {
            QG_DISTRIBUTION_RADEMACHER => Distribution::Rademacher,
            QG_DISTRIBUTION_GAUSSIAN => Distribution::Gaussian,
            other => return Err(QgFail(QgStatus::Argument, format!("unknown distribution {other}"))),
        };
        let inner = Projector::new(ProjectionSpec::new(seed, input_dim, output_dim, dist))?;
        *out = Box::into_raw(Box::new(QgProjector { inner }));
        Ok(())
    })
}

/// Projects `count` row-major vectors of `input_dim` floats into `output`
/// (`count * output_dim` floats).
///
/// # Safety
/// `p` must come from [`qg_projector_new`]; the buffers must hold the stated
/// number of elements.
#[no_mangle]
pub unsafe extern "C" fn qg_projector_project(
    p: *const QgProjector,
    input: *const f32,
    count: usize,
    output: *mut f32,
) -> QgStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("projector"))?;
        let (d, k) = (p.inner.input_dim(), p.inner.output_dim());
        let input = slice(input, count * d, "input")?;
        let output = slice_mut(output, count * k, "output")?;
        if count == 0 {
            return Ok(());
        }
        let rows: Vec<&[f32]> = input.chunks_exact(d).collect();
        for (dst, src) in output.chunks_exact_mut(k).zip(p.inner.project_batch(&rows)?) {
            dst.copy_from_slice(&src);
        }
        Ok(())
    })
}

/// # Safety
/// `p` must come from [`qg_projector_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn qg_projector_free(p: *mut QgProjector) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Quantizes `len` floats into `codes` (`len` bytes) and the scale factor;
/// `method` is one of the `QG_METHOD_*` constants.
/// `degenerate` may be null.
///
/// # Safety
/// Buffers must hold `len` elements; `scale` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qg_quantize(
    values: *const f32,
    len: usize,
    method: u32,
    bits: u8,
    codes: *mut i8,
    scale: *mut f32,
    degenerate: *mut bool,
) -> QgStatus {
    guard(|| {
        let s = scheme(method, bits)?;
        let values = slice(values, len, "values")?;
        let codes = slice_mut(codes, len, "codes")?;
        if scale.is_null() {
            return Err(null("scale"));
        }
        let qv = quantize(values, s)?;
        codes.copy_from_slice(&qv.codes);
        *scale = qv.scale;
        if !degenerate.is_null() {
            *degenerate = qv.degenerate;
        }
        Ok(())
    })
}

/// Bytes needed to pack `k` codes of `bits` bits.
#[no_mangle]
pub extern "C" fn qg_packed_len(k: usize, bits: u8) -> usize {
    packed_len(k, bits)
}

/// Packs `len` codes into `out`, which must be `qg_packed_len(len, bits)` bytes.
///
/// # Safety
/// Buffers must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn qg_pack(codes: *const i8, len: usize, bits: u8, out: *mut u8, out_len: usize) -> QgStatus {
    guard(|| {
        let codes = slice(codes, len, "codes")?;
        check_len("packed buffer", packed_len(len, bits), out_len)?;
        let out = slice_mut(out, out_len, "out")?;
        Ok(pack_into(codes, bits, out)?)
    })
}

/// Unpacks `k` codes from `bytes` (`bytes_len` must equal `qg_packed_len(k, bits)`).
///
/// # Safety
/// Buffers must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn qg_unpack(bytes: *const u8, bytes_len: usize, bits: u8, codes: *mut i8, k: usize) -> QgStatus {
    guard(|| {
        check_len("packed buffer", packed_len(k, bits), bytes_len)?;
        let bytes = slice(bytes, bytes_len, "bytes")?;
        let codes = slice_mut(codes, k, "codes")?;
        Ok(unpack_into(bytes, bits, codes)?)
    })
}

/// Storage in bytes for `n` samples of `k` codes at `bits` bits over
/// `checkpoints` checkpoints.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qg_estimate_size(
    n: u64,
    k: u64,
    bits: u32,
    checkpoints: u64,
    include_scales: bool,
    out: *mut u64,
) -> QgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = estimate_size(n, k, bits, checkpoints, include_scales)?;
        Ok(())
    })
}

/// Opens a store file for reading.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qg_store_open(path: *const c_char, out: *mut *mut QgStore) -> QgStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| QgFail(QgStatus::Argument, "path is not valid UTF-8".into()))?;
        let inner = Store::open(path)?;
        let ids = inner
            .ids()
            .iter()
            .map(|id| CString::new(id.as_str()).map_err(|_| QgFail(QgStatus::Data, format!("sample id {id:?} contains NUL"))))
            .collect::<Result<_, _>>()?;
        *out = Box::into_raw(Box::new(QgStore { inner, ids }));
        Ok(())
    })
}

/// Number of vectors, or 0 for a null handle.
///
/// # Safety
/// `s` must come from [`qg_store_open`] or be null.
#[no_mangle]
pub unsafe extern "C" fn qg_store_len(s: *const QgStore) -> usize {
    s.as_ref().map_or(0, |s| s.inner.len())
}

/// Vector length `k`, or 0 for a null handle.
///
/// # Safety
/// As [`qg_store_len`].
#[no_mangle]
pub unsafe extern "C" fn qg_store_k(s: *const QgStore) -> usize {
    s.as_ref().map_or(0, |s| s.inner.k())
}

/// Code bitwidth, 32 for float stores, 0 for a null handle.
///
/// # Safety
/// As [`qg_store_len`].
#[no_mangle]
pub unsafe extern "C" fn qg_store_bits(s: *const QgStore) -> u32 {
    s.as_ref().map_or(0, |s| match s.inner.kind() {
        StoreKind::Float32 => 32,
        StoreKind::Quantized { scheme } => scheme.bits() as u32,
    })
}

/// Sample id of vector `index`, owned by the handle; null when out of range.
///
/// # Safety
/// As [`qg_store_len`].
#[no_mangle]
pub unsafe extern "C" fn qg_store_sample_id(s: *const QgStore, index: usize) -> *const c_char {
    s.as_ref()
        .and_then(|s| s.ids.get(index))
        .map_or(ptr::null(), |c| c.as_ptr())
}

/// Reads the codes and scale of vector `index` of a quantized store.
///
/// # Safety
/// `codes` must hold `k` bytes and `scale` be writable.
#[no_mangle]
pub unsafe extern "C" fn qg_store_read_codes(
    s: *const QgStore,
    index: usize,
    codes: *mut i8,
    k: usize,
    scale: *mut f32,
) -> QgStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("store"))?;
        check_len("codes buffer", s.inner.k(), k)?;
        let codes = slice_mut(codes, k, "codes")?;
        if scale.is_null() {
            return Err(null("scale"));
        }
        check_index(s, index)?;
        match s.inner.read_at(index)? {
            StoredVector::Quantized(qv) => {
                codes.copy_from_slice(&qv.codes);
                *scale = qv.scale;
                Ok(())
            }
            StoredVector::Float { .. } => Err(QgFail(QgStatus::Scheme, "store holds float32 vectors".into())),
        }
    })
}

/// Reads vector `index` of a float32 store into `values` (`k` floats).
///
/// # Safety
/// `values` must hold `k` floats.
#[no_mangle]
pub unsafe extern "C" fn qg_store_read_float(s: *const QgStore, index: usize, values: *mut f32, k: usize) -> QgStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("store"))?;
        check_len("values buffer", s.inner.k(), k)?;
        let out = slice_mut(values, k, "values")?;
        check_index(s, index)?;
        match s.inner.read_at(index)? {
            StoredVector::Float { values, .. } => {
                out.copy_from_slice(&values);
                Ok(())
            }
            StoredVector::Quantized(_) => Err(QgFail(QgStatus::Scheme, "store holds quantized codes".into())),
        }
    })
}

fn check_index(s: &QgStore, index: usize) -> Result<(), QgFail> {
    if index >= s.inner.len() {
        return Err(QgFail(
            QgStatus::Argument,
            format!("index {index} out of range for {} vectors", s.inner.len()),
        ));
    }
    Ok(())
}

/// # Safety
/// `s` must come from [`qg_store_open`] or be null.
#[no_mangle]
pub unsafe extern "C" fn qg_store_free(s: *mut QgStore) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}
