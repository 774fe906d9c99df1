//! On-disk store layout, all integers little-endian:
//!
//! ```text
//! magic            8   "QGSTORE1"
//! version          u16 major << 8 | minor
//! header_len       u32 total header bytes, magic included
//! method           u8  0 = float32, 1 = absmax, 2 = absmean, 3 = sign
//! bits             u8
//! k                u32
//! vector_count     u64
//! flags            u8  bit 0: degenerate bitmap present
//! checkpoint_id    u32 length + UTF-8 bytes
//! (fields appended by later minor versions; skipped via header_len)
//! index            per vector: u32 length + UTF-8 sample id, in write order
//! bitmap           ceil(count / 8) bytes, LSB-first, only if flag bit 0 set
//! payload          per vector: f32 scale + packed codes, or k x f32 values
//! ```

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::projector::check_finite;
use crate::quantizer::{pack_into, packed_len, unpack_codes, Method, QuantScheme, QuantizedVector};

pub const MAGIC: &[u8; 8] = b"QGSTORE1";
pub const VERSION_MAJOR: u8 = 1;
pub const VERSION_MINOR: u8 = 0;
const FIXED_HEADER_LEN: usize = 8 + 2 + 4 + 1 + 1 + 4 + 8 + 1 + 4;
const FLAG_DEGENERATE_BITMAP: u8 = 1;

/// What a store's payload holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum StoreKind {
    /// Unquantized projected gradients.
    Float32,
    Quantized { scheme: QuantScheme },
}

impl StoreKind {
    fn encode(self) -> (u8, u8) {
        match self {
            StoreKind::Float32 => (0, 32),
            StoreKind::Quantized { scheme } => {
                let m = match scheme.method() {
                    Method::Absmax => 1,
                    Method::Absmean => 2,
                    Method::Sign => 3,
                };
                (m, scheme.bits())
            }
        }
    }

    fn decode(method: u8, bits: u8) -> Result<Self> {
        let method = match (method, bits) {
            (0, 32) => return Ok(StoreKind::Float32),
            (1, _) => Method::Absmax,
            (2, _) => Method::Absmean,
            (3, _) => Method::Sign,
            _ => {
                return Err(Error::Scheme(format!(
                    "unknown store encoding method={method} bits={bits}"
                )))
            }
        };
        Ok(StoreKind::Quantized {
            scheme: QuantScheme::new(method, bits)?,
        })
    }

    pub fn scheme(&self) -> Option<QuantScheme> {
        match self {
            StoreKind::Float32 => None,
            StoreKind::Quantized { scheme } => Some(*scheme),
        }
    }

    /// Payload bytes per vector.
    pub fn record_len(&self, k: usize) -> usize {
        match self {
            StoreKind::Float32 => 4 * k,
            StoreKind::Quantized { scheme } => 4 + packed_len(k, scheme.bits()),
        }
    }
}

impl std::fmt::Display for StoreKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StoreKind::Float32 => f.write_str("float32"),
            StoreKind::Quantized { scheme } => scheme.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreHeader {
    pub version_major: u8,
    pub version_minor: u8,
    pub kind: StoreKind,
    pub k: u32,
    pub vector_count: u64,
    pub checkpoint_id: String,
    pub has_degenerate_bitmap: bool,
    /// Bytes occupied by the header on disk.
    pub header_len: u32,
}

/// One vector as read back from a store.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredVector {
    Quantized(QuantizedVector),
    Float {
        sample_id: String,
        checkpoint_id: String,
        values: Vec<f32>,
        degenerate: bool,
    },
}

impl StoredVector {
    pub fn sample_id(&self) -> &str {
        match self {
            StoredVector::Quantized(q) => &q.sample_id,
            StoredVector::Float { sample_id, .. } => sample_id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WriteSummary {
    pub count: u64,
    pub bytes: u64,
}

/// Streams vectors into a new store file.
///
/// The payload is spooled to a temporary file next to the destination; on
/// [`StoreWriter::finish`] the header and index are written to a second
/// temporary, the payload appended, and the result renamed into place.
pub struct StoreWriter {
    path: PathBuf,
    kind: StoreKind,
    k: usize,
    checkpoint_id: String,
    ids: Vec<String>,
    seen: HashSet<String>,
    degenerate: Vec<bool>,
    payload: BufWriter<tempfile::NamedTempFile>,
    scratch: Vec<u8>,
}

fn temp_in(path: &Path) -> Result<tempfile::NamedTempFile> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    tempfile::NamedTempFile::new_in(dir).at(dir)
}

impl StoreWriter {
    pub fn create(
        path: impl AsRef<Path>,
        kind: StoreKind,
        k: usize,
        checkpoint_id: impl Into<String>,
    ) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if k == 0 || k > u32::MAX as usize {
            return Err(Error::Write(format!("invalid vector length k={k}")));
        }
        let payload = BufWriter::with_capacity(1 << 20, temp_in(&path)?);
        Ok(Self {
            path,
            kind,
            k,
            checkpoint_id: checkpoint_id.into(),
            ids: Vec::new(),
            seen: HashSet::new(),
            degenerate: Vec::new(),
            payload,
            scratch: vec![0u8; kind.record_len(k)],
        })
    }

    pub fn kind(&self) -> StoreKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn register(&mut self, sample_id: &str) -> Result<()> {
        if sample_id.len() > u32::MAX as usize {
            return Err(Error::Write("sample id too long".into()));
        }
        if !self.seen.insert(sample_id.to_string()) {
            return Err(Error::Write(format!(
                "duplicate sample id {sample_id:?} in {}",
                self.path.display()
            )));
        }
        self.ids.push(sample_id.to_string());
        Ok(())
    }

    fn write_scratch(&mut self) -> Result<()> {
        let tmp_path = self.payload.get_ref().path().to_path_buf();
        self.payload.write_all(&self.scratch).at(&tmp_path)
    }

    pub fn push_quantized(&mut self, qv: &QuantizedVector) -> Result<()> {
        let scheme = match self.kind {
            StoreKind::Quantized { scheme } => scheme,
            StoreKind::Float32 => {
                return Err(Error::Write("cannot write quantized vectors to a float32 store".into()))
            }
        };
        if qv.scheme != scheme {
            return Err(Error::Write(format!(
                "scheme mismatch for {:?}: store is {scheme}, vector is {}",
                qv.sample_id, qv.scheme
            )));
        }
        if qv.codes.len() != self.k {
            return Err(Error::Dimension {
                context: format!("vector {:?}", qv.sample_id),
                expected: self.k,
                actual: qv.codes.len(),
            });
        }
        if !(qv.scale.is_finite() && qv.scale > 0.0) {
            return Err(Error::Write(format!(
                "vector {:?} has invalid scale {}",
                qv.sample_id, qv.scale
            )));
        }
        self.scratch[..4].copy_from_slice(&qv.scale.to_le_bytes());
        pack_into(&qv.codes, scheme.bits(), &mut self.scratch[4..])?;
        self.register(&qv.sample_id)?;
        self.degenerate.push(qv.degenerate);
        self.write_scratch()
    }

    pub fn push_float(&mut self, sample_id: &str, values: &[f32]) -> Result<()> {
        if self.kind != StoreKind::Float32 {
            return Err(Error::Write(format!(
                "cannot write float vectors to a {} store",
                self.kind
            )));
        }
        if values.len() != self.k {
            return Err(Error::Dimension {
                context: format!("vector {sample_id:?}"),
                expected: self.k,
                actual: values.len(),
            });
        }
        check_finite(values, sample_id)?;
        for (dst, v) in self.scratch.chunks_exact_mut(4).zip(values) {
            dst.copy_from_slice(&v.to_le_bytes());
        }
        self.register(sample_id)?;
        self.degenerate.push(values.iter().all(|&v| v == 0.0));
        self.write_scratch()
    }

    pub fn finish(self) -> Result<WriteSummary> {
        let StoreWriter {
            path,
            kind,
            k,
            checkpoint_id,
            ids,
            degenerate,
            payload,
            ..
        } = self;
        let mut payload = payload
            .into_inner()
            .map_err(|e| Error::io(&path, e.into_error()))?;

        let has_bitmap = degenerate.iter().any(|&d| d);
        let head = encode_header(kind, k as u32, ids.len() as u64, &checkpoint_id, has_bitmap);

        let out = temp_in(&path)?;
        let tmp_path = out.path().to_path_buf();
        let mut w = BufWriter::with_capacity(1 << 20, out);
        w.write_all(&head).at(&tmp_path)?;
        for id in &ids {
            w.write_all(&(id.len() as u32).to_le_bytes()).at(&tmp_path)?;
            w.write_all(id.as_bytes()).at(&tmp_path)?;
        }
        if has_bitmap {
            let mut bitmap = vec![0u8; degenerate.len().div_ceil(8)];
            for (i, _) in degenerate.iter().enumerate().filter(|(_, &d)| d) {
                bitmap[i / 8] |= 1 << (i % 8);
            }
            w.write_all(&bitmap).at(&tmp_path)?;
        }
        let payload_path = payload.path().to_path_buf();
        payload.as_file_mut().seek(SeekFrom::Start(0)).at(&payload_path)?;
        std::io::copy(payload.as_file_mut(), &mut w).at(&payload_path)?;
        let out = w.into_inner().map_err(|e| Error::io(&tmp_path, e.into_error()))?;
        out.as_file().sync_all().at(&tmp_path)?;
        let bytes = out.as_file().metadata().at(&tmp_path)?.len();
        out.persist(&path).map_err(|e| Error::io(&path, e.error))?;
        Ok(WriteSummary {
            count: ids.len() as u64,
            bytes,
        })
    }
}

fn encode_header(kind: StoreKind, k: u32, count: u64, checkpoint_id: &str, bitmap: bool) -> Vec<u8> {
    let header_len = (FIXED_HEADER_LEN + checkpoint_id.len()) as u32;
    let (method, bits) = kind.encode();
    let mut h = Vec::with_capacity(header_len as usize);
    h.extend_from_slice(MAGIC);
    h.extend_from_slice(&((VERSION_MAJOR as u16) << 8 | VERSION_MINOR as u16).to_le_bytes());
    h.extend_from_slice(&header_len.to_le_bytes());
    h.push(method);
    h.push(bits);
    h.extend_from_slice(&k.to_le_bytes());
    h.extend_from_slice(&count.to_le_bytes());
    h.push(if bitmap { FLAG_DEGENERATE_BITMAP } else { 0 });
    h.extend_from_slice(&(checkpoint_id.len() as u32).to_le_bytes());
    h.extend_from_slice(checkpoint_id.as_bytes());
    h
}

/// Header plus index (and bitmap) bytes for a store holding `ids`.
pub fn metadata_len(checkpoint_id: &str, ids: &[&str], with_bitmap: bool) -> u64 {
    let index: usize = ids.iter().map(|s| 4 + s.len()).sum();
    let bitmap = if with_bitmap { ids.len().div_ceil(8) } else { 0 };
    (FIXED_HEADER_LEN + checkpoint_id.len() + index + bitmap) as u64
}

/// Writes every vector from `vectors` into a new quantized store.
pub fn write_store<'a>(
    path: impl AsRef<Path>,
    scheme: QuantScheme,
    k: usize,
    checkpoint_id: &str,
    vectors: impl IntoIterator<Item = &'a QuantizedVector>,
) -> Result<WriteSummary> {
    let mut w = StoreWriter::create(path, StoreKind::Quantized { scheme }, k, checkpoint_id)?;
    for qv in vectors {
        w.push_quantized(qv)?;
    }
    w.finish()
}

/// Read-only view of a finalized store. Reads use positioned I/O, so one
/// handle may serve many threads.
#[derive(Debug)]
pub struct Store {
    path: PathBuf,
    file: File,
    header: StoreHeader,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    degenerate: Vec<bool>,
    payload_offset: u64,
    record_len: usize,
}

struct Cursor<'a> {
    path: &'a Path,
    reader: BufReader<&'a File>,
    offset: u64,
}

impl Cursor<'_> {
    fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        match self.reader.read_exact(&mut buf) {
            Ok(()) => {
                self.offset += n as u64;
                Ok(buf)
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Err(Error::Corruption {
                path: self.path.to_path_buf(),
                offset: self.offset,
                message: format!("unexpected end of file reading {what}"),
            }),
            Err(e) => Err(Error::io(self.path, e)),
        }
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.bytes(N, what)?.try_into().unwrap())
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = u32::from_le_bytes(self.array(what)?) as usize;
        let at = self.offset;
        String::from_utf8(self.bytes(len, what)?).map_err(|_| Error::Corruption {
            path: self.path.to_path_buf(),
            offset: at,
            message: format!("{what} is not valid UTF-8"),
        })
    }
}

impl Store {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).at(&path)?;
        let file_len = file.metadata().at(&path)?.len();
        let mut cur = Cursor {
            path: &path,
            reader: BufReader::with_capacity(1 << 16, &file),
            offset: 0,
        };

        let format_err = |message: String| Error::Format {
            path: path.clone(),
            message,
        };
        let magic = match cur.bytes(8, "magic") {
            Ok(m) => m,
            Err(Error::Corruption { .. }) => {
                return Err(format_err(format!(
                    "file too short for magic (expected {:?})",
                    String::from_utf8_lossy(MAGIC)
                )))
            }
            Err(e) => return Err(e),
        };
        if magic != MAGIC {
            return Err(format_err(format!(
                "bad magic: expected {:?}, found {:?}",
                String::from_utf8_lossy(MAGIC),
                String::from_utf8_lossy(&magic)
            )));
        }
        let version = u16::from_le_bytes(cur.array("version")?);
        let (major, minor) = ((version >> 8) as u8, (version & 0xFF) as u8);
        if major != VERSION_MAJOR {
            return Err(format_err(format!(
                "unsupported format version {major}.{minor} (this reader handles {VERSION_MAJOR}.x)"
            )));
        }
        let header_len = u32::from_le_bytes(cur.array("header length")?);
        let method = cur.array::<1>("method")?[0];
        let bits = cur.array::<1>("bits")?[0];
        let kind = StoreKind::decode(method, bits).map_err(|e| format_err(e.to_string()))?;
        let k = u32::from_le_bytes(cur.array("k")?);
        let vector_count = u64::from_le_bytes(cur.array("vector count")?);
        let flags = cur.array::<1>("flags")?[0];
        let checkpoint_id = cur.string("checkpoint id")?;
        if k == 0 {
            return Err(format_err("k is zero".into()));
        }
        if (header_len as u64) < cur.offset {
            return Err(format_err(format!(
                "header length {header_len} shorter than its fields ({})",
                cur.offset
            )));
        }
        let extra = header_len as u64 - cur.offset;
        cur.bytes(extra as usize, "header extension")?;

        // Every index entry takes at least 4 bytes.
        if vector_count > file_len / 4 {
            return Err(Error::Corruption {
                path: path.clone(),
                offset: 20,
                message: format!("vector count {vector_count} exceeds file capacity"),
            });
        }
        let mut ids = Vec::with_capacity(vector_count as usize);
        let mut index = HashMap::with_capacity(vector_count as usize);
        for i in 0..vector_count as usize {
            let at = cur.offset;
            let id = cur.string("sample id index")?;
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Corruption {
                    path: path.clone(),
                    offset: at,
                    message: format!("duplicate sample id {id:?} in index"),
                });
            }
            ids.push(id);
        }
        let has_bitmap = flags & FLAG_DEGENERATE_BITMAP != 0;
        let degenerate = if has_bitmap {
            let bitmap = cur.bytes((vector_count as usize).div_ceil(8), "degenerate bitmap")?;
            (0..vector_count as usize)
                .map(|i| (bitmap[i / 8] >> (i % 8)) & 1 == 1)
                .collect()
        } else {
            vec![false; vector_count as usize]
        };

        let payload_offset = cur.offset;
        let record_len = kind.record_len(k as usize);
        let expected = payload_offset + vector_count * record_len as u64;
        if file_len < expected {
            return Err(Error::Corruption {
                path: path.clone(),
                offset: file_len,
                message: format!(
                    "truncated payload: expected {expected} bytes, file has {file_len}"
                ),
            });
        }
        drop(cur);

        Ok(Self {
            header: StoreHeader {
                version_major: major,
                version_minor: minor,
                kind,
                k,
                vector_count,
                checkpoint_id,
                has_degenerate_bitmap: has_bitmap,
                header_len,
            },
            path,
            file,
            ids,
            index,
            degenerate,
            payload_offset,
            record_len,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn header(&self) -> &StoreHeader {
        &self.header
    }

    pub fn kind(&self) -> StoreKind {
        self.header.kind
    }

    pub fn k(&self) -> usize {
        self.header.k as usize
    }

    pub fn checkpoint_id(&self) -> &str {
        &self.header.checkpoint_id
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Sample ids in write order.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn position(&self, sample_id: &str) -> Option<usize> {
        self.index.get(sample_id).copied()
    }

    pub fn is_degenerate(&self, idx: usize) -> bool {
        self.degenerate[idx]
    }

    pub fn record_len(&self) -> usize {
        self.record_len
    }

    pub fn payload_offset(&self) -> u64 {
        self.payload_offset
    }

    fn read_record(&self, idx: usize, buf: &mut [u8]) -> Result<()> {
        let offset = self.payload_offset + (idx * self.record_len) as u64;
        read_exact_at(&self.file, buf, offset).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Corruption {
                    path: self.path.clone(),
                    offset,
                    message: "record extends past end of file".into(),
                }
            } else {
                Error::io(&self.path, e)
            }
        })
    }

    fn decode(&self, idx: usize, raw: &[u8]) -> Result<StoredVector> {
        let sample_id = self.ids[idx].clone();
        let checkpoint_id = self.header.checkpoint_id.clone();
        let degenerate = self.degenerate[idx];
        let k = self.k();
        let corrupt = |message: String| Error::Corruption {
            path: self.path.clone(),
            offset: self.payload_offset + (idx * self.record_len) as u64,
            message,
        };
        match self.header.kind {
            StoreKind::Float32 => Ok(StoredVector::Float {
                sample_id,
                checkpoint_id,
                values: raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
                degenerate,
            }),
            StoreKind::Quantized { scheme } => {
                let scale = f32::from_le_bytes(raw[..4].try_into().unwrap());
                if !(scale.is_finite() && scale > 0.0) {
                    return Err(corrupt(format!("invalid scale {scale}")));
                }
                let codes = unpack_codes(&raw[4..], k, scheme.bits())
                    .map_err(|e| corrupt(e.to_string()))?;
                Ok(StoredVector::Quantized(QuantizedVector {
                    sample_id,
                    checkpoint_id,
                    scheme,
                    scale,
                    codes,
                    degenerate,
                }))
            }
        }
    }

    pub fn read_at(&self, idx: usize) -> Result<StoredVector> {
        if idx >= self.len() {
            return Err(Error::Argument(format!(
                "index {idx} out of range for store with {} vectors",
                self.len()
            )));
        }
        let mut raw = vec![0u8; self.record_len];
        self.read_record(idx, &mut raw)?;
        self.decode(idx, &raw)
    }

    pub fn read(&self, sample_id: &str) -> Result<StoredVector> {
        let idx = self
            .position(sample_id)
            .ok_or_else(|| Error::Lookup(sample_id.to_string()))?;
        self.read_at(idx)
    }

    /// Reads a quantized vector by sample id.
    pub fn read_vector(&self, sample_id: &str) -> Result<QuantizedVector> {
        match self.read(sample_id)? {
            StoredVector::Quantized(q) => Ok(q),
            StoredVector::Float { .. } => Err(Error::Unsupported(format!(
                "{} holds float32 vectors, not quantized codes",
                self.path.display()
            ))),
        }
    }

    /// Reads a float vector by sample id.
    pub fn read_float(&self, sample_id: &str) -> Result<Vec<f32>> {
        match self.read(sample_id)? {
            StoredVector::Float { values, .. } => Ok(values),
            StoredVector::Quantized(_) => Err(Error::Unsupported(format!(
                "{} holds quantized codes, not float32 vectors",
                self.path.display()
            ))),
        }
    }

    /// Sequential scan in write order.
    pub fn iter(&self) -> StoreIter<'_> {
        let per_chunk = ((1 << 20) / self.record_len.max(1)).max(1);
        StoreIter {
            store: self,
            next: 0,
            chunk_start: 0,
            chunk: Vec::with_capacity(per_chunk * self.record_len),
            per_chunk,
        }
    }

    /// The entire payload, `len() * record_len()` bytes.
    pub fn read_payload(&self) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; self.len() * self.record_len];
        read_exact_at(&self.file, &mut buf, self.payload_offset).map_err(|e| Error::io(&self.path, e))?;
        Ok(buf)
    }
}

/// Reads records in chunks with positioned I/O, leaving the file cursor alone.
pub struct StoreIter<'a> {
    store: &'a Store,
    next: usize,
    chunk_start: usize,
    chunk: Vec<u8>,
    per_chunk: usize,
}

impl Iterator for StoreIter<'_> {
    type Item = Result<StoredVector>;

    fn next(&mut self) -> Option<Self::Item> {
        let store = self.store;
        if self.next >= store.len() {
            return None;
        }
        let rl = store.record_len;
        let loaded = self.chunk.len() / rl.max(1);
        if self.next >= self.chunk_start + loaded || self.chunk.is_empty() {
            let n = self.per_chunk.min(store.len() - self.next);
            self.chunk.resize(n * rl, 0);
            self.chunk_start = self.next;
            let offset = store.payload_offset + (self.next * rl) as u64;
            if let Err(e) = read_exact_at(&store.file, &mut self.chunk, offset) {
                self.next = store.len();
                return Some(Err(Error::io(&store.path, e)));
            }
        }
        let idx = self.next;
        self.next += 1;
        let at = (idx - self.chunk_start) * rl;
        Some(store.decode(idx, &self.chunk[at..at + rl]))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.store.len() - self.next;
        (n, Some(n))
    }
}

#[cfg(unix)]
fn read_exact_at(file: &File, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
    std::os::unix::fs::FileExt::read_exact_at(file, buf, offset)
}

#[cfg(not(unix))]
fn read_exact_at(file: &File, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
    let mut f = file.try_clone()?;
    f.seek(SeekFrom::Start(offset))?;
    f.read_exact(buf)
}
