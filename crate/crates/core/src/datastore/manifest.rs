use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, IoContext, Result};

/// Name given to validation vectors when a checkpoint lists a single store.
pub const DEFAULT_TASK: &str = "val";

/// Validation stores of one checkpoint: either one store, or one per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ValStores {
    Single(PathBuf),
    Tasks(BTreeMap<String, PathBuf>),
}

impl ValStores {
    /// `(task, path)` pairs ordered by task name.
    pub fn tasks(&self) -> Vec<(String, PathBuf)> {
        match self {
            ValStores::Single(p) => vec![(DEFAULT_TASK.to_string(), p.clone())],
            ValStores::Tasks(m) => m.iter().map(|(t, p)| (t.clone(), p.clone())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub id: String,
    pub eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_store: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_store: Option<ValStores>,
}

/// Ordered checkpoints with their learning rates and store files.
///
/// Store paths in the JSON file are relative to the manifest's directory;
/// [`CheckpointManifest::load`] resolves them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub checkpoints: Vec<CheckpointEntry>,
}

impl CheckpointManifest {
    /// Manifest with no store paths, e.g. for in-memory scoring.
    pub fn from_etas<S: Into<String>>(entries: impl IntoIterator<Item = (S, f64)>) -> Result<Self> {
        let m = Self {
            checkpoints: entries
                .into_iter()
                .map(|(id, eta)| CheckpointEntry {
                    id: id.into(),
                    eta,
                    train_store: None,
                    val_store: None,
                })
                .collect(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.checkpoints.is_empty() {
            return Err(Error::Config("manifest lists no checkpoints".into()));
        }
        let mut seen = HashSet::new();
        for c in &self.checkpoints {
            if !seen.insert(c.id.as_str()) {
                return Err(Error::Config(format!("duplicate checkpoint id {:?}", c.id)));
            }
            if !(c.eta.is_finite() && c.eta > 0.0) {
                return Err(Error::Config(format!(
                    "checkpoint {:?} has invalid learning rate {}",
                    c.id, c.eta
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkpoints.is_empty()
    }

    pub fn etas(&self) -> Vec<f64> {
        self.checkpoints.iter().map(|c| c.eta).collect()
    }

    pub fn eta_sum(&self) -> f64 {
        self.checkpoints.iter().map(|c| c.eta).sum()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.checkpoints.iter().map(|c| c.id.as_str()).collect()
    }

    /// Same manifest with every learning rate multiplied by `factor`.
    pub fn scaled_etas(&self, factor: f64) -> Result<Self> {
        let mut m = self.clone();
        for c in &mut m.checkpoints {
            c.eta *= factor;
        }
        m.validate()?;
        Ok(m)
    }

    /// Loads and validates, resolving store paths against the manifest's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).at(path)?;
        let mut m: Self = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        m.validate()?;
        let base = path.parent().unwrap_or(Path::new(""));
        for c in &mut m.checkpoints {
            if let Some(p) = &mut c.train_store {
                *p = base.join(&*p);
            }
            match &mut c.val_store {
                Some(ValStores::Single(p)) => *p = base.join(&*p),
                Some(ValStores::Tasks(map)) => {
                    for p in map.values_mut() {
                        *p = base.join(&*p);
                    }
                }
                None => {}
            }
        }
        Ok(m)
    }

    /// Writes the manifest as pretty JSON. Paths are written as given.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").at(path)
    }

    /// Checks that `other` lists the same checkpoints with the same learning rates.
    pub fn check_aligned(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Alignment(format!(
                "manifests list {} and {} checkpoints",
                self.len(),
                other.len()
            )));
        }
        for (a, b) in self.checkpoints.iter().zip(&other.checkpoints) {
            if a.id != b.id || a.eta != b.eta {
                return Err(Error::Alignment(format!(
                    "checkpoint ({:?}, eta={}) does not match ({:?}, eta={})",
                    a.id, a.eta, b.id, b.eta
                )));
            }
        }
        Ok(())
    }
}

/// Hex SHA-256 of a file's bytes.
pub fn file_sha256(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).at(path)?;
    Ok(hex_digest(&bytes))
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
