//! Persistent gradient datastore: one binary file per checkpoint, tied
//! together by a JSON [`CheckpointManifest`].

mod format;
mod manifest;
mod size;

pub use format::{
    metadata_len, write_store, Store, StoreHeader, StoreIter, StoreKind, StoreWriter, StoredVector,
    WriteSummary, MAGIC, VERSION_MAJOR, VERSION_MINOR,
};
pub use manifest::{file_sha256, CheckpointEntry, CheckpointManifest, ValStores, DEFAULT_TASK};
pub(crate) use manifest::hex_digest;
pub use size::estimate_size;

/// Opens a store by path.
pub fn open_store(path: impl AsRef<std::path::Path>) -> crate::Result<Store> {
    Store::open(path)
}
