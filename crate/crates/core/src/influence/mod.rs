//! Influence scoring between training and validation gradients.
//!
//! Three modes share one engine:
//!
//! * `qless`: learning-rate-weighted cosine of quantized codes. The cosine is
//!   computed from integer dot products and integer norms; stored scales are
//!   never applied, so they cancel exactly.
//! * `less_fp`: learning-rate-weighted cosine of full-precision vectors.
//! * `tracin`: learning-rate-weighted raw dot products.
//!
//! Checkpoints are folded in one at a time; each (train, val) pair sums its
//! per-checkpoint terms in manifest order, and per-task aggregation runs in
//! validation-sample order, so results do not depend on the thread count.

mod kernel;
mod prepared;
mod table;

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use kernel::{dot_i8, dot_sign, sign_words, xor_popcount};
pub use prepared::PreparedSet;
pub use table::{Provenance, ScoreTable, CACHE_MAGIC};

use crate::datastore::{file_sha256, CheckpointManifest, Store, StoreKind};
use crate::error::{Error, Result};
use crate::quantizer::QuantizedVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    #[default]
    Qless,
    LessFp,
    Tracin,
}

impl fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreMode::Qless => "qless",
            ScoreMode::LessFp => "less_fp",
            ScoreMode::Tracin => "tracin",
        })
    }
}

impl FromStr for ScoreMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "qless" => Ok(ScoreMode::Qless),
            "less_fp" | "less" => Ok(ScoreMode::LessFp),
            "tracin" => Ok(ScoreMode::Tracin),
            other => Err(Error::Argument(format!("unknown scoring mode {other:?}"))),
        }
    }
}

/// Treatment of all-zero gradients in cosine modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DegeneratePolicy {
    /// Drop the affected checkpoint term (it contributes 0) and log a warning.
    #[default]
    Skip,
    Error,
}

/// How scores against one task's validation samples are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ValAggregation {
    #[default]
    Mean,
    Sum,
}

impl FromStr for ValAggregation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(ValAggregation::Mean),
            "sum" => Ok(ValAggregation::Sum),
            other => Err(Error::Argument(format!("unknown validation aggregation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub mode: ScoreMode,
    pub degenerate: DegeneratePolicy,
    pub aggregation: ValAggregation,
}

impl ScoreOptions {
    pub fn new(mode: ScoreMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }
}

/// One per-checkpoint gradient of a [`GradientSeries`].
#[derive(Debug, Clone, PartialEq)]
pub enum SeriesEntry {
    Quantized(QuantizedVector),
    Full(Vec<f32>),
}

/// A sample's gradients, one entry per manifest checkpoint in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSeries {
    pub sample_id: String,
    pub entries: Vec<SeriesEntry>,
}

impl GradientSeries {
    pub fn quantized(sample_id: impl Into<String>, entries: Vec<QuantizedVector>) -> Self {
        Self {
            sample_id: sample_id.into(),
            entries: entries.into_iter().map(SeriesEntry::Quantized).collect(),
        }
    }

    pub fn full(sample_id: impl Into<String>, entries: Vec<Vec<f32>>) -> Self {
        Self {
            sample_id: sample_id.into(),
            entries: entries.into_iter().map(SeriesEntry::Full).collect(),
        }
    }
}

/// Unit vector along the integer codes of `qv`; the scale is not applied.
/// Returns `Ok(None)` for an all-zero vector under [`DegeneratePolicy::Skip`].
pub fn normalize_codes(qv: &QuantizedVector, policy: DegeneratePolicy) -> Result<Option<Vec<f64>>> {
    let norm = (dot_i8(&qv.codes, &qv.codes) as f64).sqrt();
    if norm == 0.0 || qv.degenerate {
        return match policy {
            DegeneratePolicy::Skip => Ok(None),
            DegeneratePolicy::Error => Err(Error::Degenerate(qv.sample_id.clone())),
        };
    }
    Ok(Some(qv.codes.iter().map(|&c| c as f64 / norm).collect()))
}

fn check_series(series: &GradientSeries, manifest: &CheckpointManifest) -> Result<()> {
    if series.entries.len() != manifest.len() {
        return Err(Error::Alignment(format!(
            "sample {:?} has {} checkpoint entries, manifest lists {}",
            series.sample_id,
            series.entries.len(),
            manifest.len()
        )));
    }
    Ok(())
}

fn single_set(entry: &SeriesEntry) -> Result<PreparedSet> {
    match entry {
        SeriesEntry::Quantized(q) => PreparedSet::from_quantized(q.scheme, q.codes.len(), [q]),
        SeriesEntry::Full(v) => PreparedSet::from_float(v.len(), [v.as_slice()]),
    }
}

fn series_sets(series: &GradientSeries) -> Result<Vec<PreparedSet>> {
    series.entries.iter().map(single_set).collect()
}

/// Learning-rate-weighted sum of per-checkpoint cosines between `train` and
/// `val`. Quantized entries use their codes, full entries their values.
pub fn pair_influence(
    train: &GradientSeries,
    val: &GradientSeries,
    manifest: &CheckpointManifest,
    policy: DegeneratePolicy,
) -> Result<f64> {
    let mode = match train.entries.first() {
        Some(SeriesEntry::Full(_)) => ScoreMode::LessFp,
        _ => ScoreMode::Qless,
    };
    series_score(train, val, manifest, mode, policy)
}

/// Learning-rate-weighted sum of raw per-checkpoint dot products.
pub fn tracin_influence(train: &GradientSeries, val: &GradientSeries, manifest: &CheckpointManifest) -> Result<f64> {
    for s in [train, val] {
        if s.entries.iter().any(|e| matches!(e, SeriesEntry::Quantized(_))) {
            return Err(Error::Argument(format!(
                "tracin needs full-precision gradients; sample {:?} is quantized",
                s.sample_id
            )));
        }
    }
    series_score(train, val, manifest, ScoreMode::Tracin, DegeneratePolicy::Skip)
}

fn series_score(
    train: &GradientSeries,
    val: &GradientSeries,
    manifest: &CheckpointManifest,
    mode: ScoreMode,
    policy: DegeneratePolicy,
) -> Result<f64> {
    check_series(train, manifest)?;
    check_series(val, manifest)?;
    let options = ScoreOptions {
        mode,
        degenerate: policy,
        aggregation: ValAggregation::Sum,
    };
    let mut acc = InfluenceAccumulator::new(
        vec![train.sample_id.clone()],
        vec![("pair".to_string(), vec![val.sample_id.clone()])],
        options,
    )?;
    let (ts, vs) = (series_sets(train)?, series_sets(val)?);
    for ((t, v), eta) in ts.iter().zip(&vs).zip(manifest.etas()) {
        acc.add_checkpoint(eta, t, std::slice::from_ref(v))?;
    }
    Ok(acc.finish()?.get(0, 0))
}

/// Folds checkpoints into a train x validation matrix of weighted terms.
pub struct InfluenceAccumulator {
    options: ScoreOptions,
    train_ids: Vec<String>,
    tasks: Vec<String>,
    task_offsets: Vec<usize>,
    val_ids: Vec<String>,
    acc: Vec<f64>,
    skipped_terms: u64,
    checkpoints: usize,
}

impl InfluenceAccumulator {
    /// `tasks` pairs each task name with its validation sample ids.
    pub fn new(train_ids: Vec<String>, tasks: Vec<(String, Vec<String>)>, options: ScoreOptions) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::Argument("no validation tasks".into()));
        }
        let mut offsets = vec![0];
        let mut names = Vec::new();
        let mut val_ids = Vec::new();
        for (name, ids) in tasks {
            if ids.is_empty() {
                return Err(Error::Argument(format!("validation task {name:?} has no samples")));
            }
            val_ids.extend(ids);
            offsets.push(val_ids.len());
            names.push(name);
        }
        let acc = vec![0.0; train_ids.len() * val_ids.len()];
        Ok(Self {
            options,
            train_ids,
            tasks: names,
            task_offsets: offsets,
            val_ids,
            acc,
            skipped_terms: 0,
            checkpoints: 0,
        })
    }

    pub fn options(&self) -> &ScoreOptions {
        &self.options
    }

    fn check_set(&self, set: &PreparedSet, expected: usize, what: &str) -> Result<()> {
        if set.len() != expected {
            return Err(Error::Dimension {
                context: what.to_string(),
                expected,
                actual: set.len(),
            });
        }
        let quantized = set.scheme().is_some();
        if quantized != (self.options.mode == ScoreMode::Qless) {
            return Err(Error::Scheme(format!(
                "{} mode cannot score {} {what}",
                self.options.mode,
                if quantized { "quantized" } else { "full-precision" }
            )));
        }
        Ok(())
    }

    /// Adds `eta` times the per-pair term for one checkpoint. `val_tasks`
    /// holds one set per task, in the order given to [`Self::new`].
    pub fn add_checkpoint(&mut self, eta: f64, train: &PreparedSet, val_tasks: &[PreparedSet]) -> Result<()> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::Config(format!("invalid learning rate {eta}")));
        }
        if val_tasks.len() != self.tasks.len() {
            return Err(Error::Alignment(format!(
                "expected {} validation tasks, got {}",
                self.tasks.len(),
                val_tasks.len()
            )));
        }
        self.check_set(train, self.train_ids.len(), "training vectors")?;
        for (t, set) in val_tasks.iter().enumerate() {
            let n = self.task_offsets[t + 1] - self.task_offsets[t];
            self.check_set(set, n, &format!("validation vectors of task {:?}", self.tasks[t]))?;
            train.check_compatible(set, "train/validation")?;
        }
        let val = PreparedSet::concat(val_tasks)?;

        let mode = self.options.mode;
        let cosine = mode != ScoreMode::Tracin;
        if cosine {
            let train_bad = (0..train.len()).filter(|&i| train.is_degenerate(i)).collect::<Vec<_>>();
            let val_bad = (0..val.len()).filter(|&j| val.is_degenerate(j)).collect::<Vec<_>>();
            if let Some(&first) = train_bad.first().or(val_bad.first()) {
                if self.options.degenerate == DegeneratePolicy::Error {
                    let id = if train_bad.is_empty() {
                        &self.val_ids[first]
                    } else {
                        &self.train_ids[first]
                    };
                    return Err(Error::Degenerate(id.clone()));
                }
                let (nt, nv) = (train.len() as u64, val.len() as u64);
                let (bt, bv) = (train_bad.len() as u64, val_bad.len() as u64);
                let skipped = bt * nv + bv * nt - bt * bv;
                log::warn!(
                    "checkpoint {}: skipping {skipped} pair term(s) involving {} degenerate training and {} degenerate validation vector(s)",
                    self.checkpoints + 1,
                    bt,
                    bv
                );
                self.skipped_terms += skipped;
            }
        }

        let n_val = val.len();
        let val = &val;
        self.acc
            .par_chunks_mut(n_val.max(1))
            .enumerate()
            .for_each(|(r, row)| {
                if cosine && train.is_degenerate(r) {
                    return;
                }
                let nr = train.norm(r);
                for (j, slot) in row.iter_mut().enumerate() {
                    let term = if cosine {
                        if val.is_degenerate(j) {
                            continue;
                        }
                        train.dot(r, val, j) / (nr * val.norm(j))
                    } else {
                        train.dot(r, val, j)
                    };
                    *slot += eta * term;
                }
            });
        self.checkpoints += 1;
        Ok(())
    }

    pub fn skipped_terms(&self) -> u64 {
        self.skipped_terms
    }

    /// Raw pair score between train row `r` and overall validation index `j`.
    pub fn pair(&self, r: usize, j: usize) -> f64 {
        self.acc[r * self.val_ids.len() + j]
    }

    /// Aggregates each task's validation columns into one score per task.
    pub fn finish(self) -> Result<ScoreTable> {
        if self.checkpoints == 0 {
            return Err(Error::Argument("no checkpoints were scored".into()));
        }
        let n_val = self.val_ids.len();
        let n_tasks = self.tasks.len();
        let mut values = vec![0.0; self.train_ids.len() * n_tasks];
        for (r, out) in values.chunks_mut(n_tasks).enumerate() {
            let row = &self.acc[r * n_val..(r + 1) * n_val];
            for (t, o) in out.iter_mut().enumerate() {
                let cols = &row[self.task_offsets[t]..self.task_offsets[t + 1]];
                let sum: f64 = cols.iter().sum();
                *o = match self.options.aggregation {
                    ValAggregation::Sum => sum,
                    ValAggregation::Mean => sum / cols.len() as f64,
                };
            }
        }
        ScoreTable::new(self.train_ids, self.tasks, values)
    }
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str, ckpt: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("checkpoint {ckpt:?} has no {what}")))
}

/// Positions of `ids` within `store`, or a coverage error listing what is missing.
fn positions(store: &Store, ids: &[String]) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(ids.len());
    let mut missing = Vec::new();
    for id in ids {
        match store.position(id) {
            Some(p) => out.push(p),
            None => missing.push(id.clone()),
        }
    }
    if store.len() != ids.len() && missing.is_empty() {
        let known: std::collections::HashSet<&str> = ids.iter().map(String::as_str).collect();
        let extra: Vec<String> = store
            .ids()
            .iter()
            .filter(|s| !known.contains(s.as_str()))
            .cloned()
            .collect();
        return Err(Error::Coverage {
            missing: extra.len(),
            examples: extra.into_iter().take(10).collect(),
        });
    }
    if !missing.is_empty() {
        log::error!("{} lacks {} sample(s)", store.path().display(), missing.len());
        return Err(Error::Coverage {
            missing: missing.len(),
            examples: missing.into_iter().take(10).collect(),
        });
    }
    Ok(out)
}

/// Scores every training sample against every validation task, reading
/// stores listed by the two manifests one checkpoint at a time.
///
/// In `qless` mode full-precision validation stores are quantized with the
/// training store's scheme.
pub fn score_manifests(
    train_manifest: impl AsRef<Path>,
    val_manifest: impl AsRef<Path>,
    options: ScoreOptions,
) -> Result<ScoreTable> {
    let (tp, vp) = (train_manifest.as_ref(), val_manifest.as_ref());
    let train_m = CheckpointManifest::load(tp)?;
    let val_m = CheckpointManifest::load(vp)?;
    let hash = if tp == vp {
        file_sha256(tp)?
    } else {
        let joined = format!("{}{}", file_sha256(tp)?, file_sha256(vp)?);
        crate::datastore::hex_digest(joined.as_bytes())
    };
    let mut table = score_loaded(&train_m, &val_m, options)?;
    if let Some(p) = &mut table.provenance {
        p.manifest_hash = Some(hash);
    }
    Ok(table)
}

/// [`score_manifests`] for already-loaded manifests with resolved paths.
pub fn score_loaded(train_m: &CheckpointManifest, val_m: &CheckpointManifest, options: ScoreOptions) -> Result<ScoreTable> {
    train_m.check_aligned(val_m)?;

    let mut acc: Option<InfluenceAccumulator> = None;
    let mut train_ids: Vec<String> = Vec::new();
    let mut task_ids: Vec<(String, Vec<String>)> = Vec::new();
    let mut scheme = None;

    for (ci, (tc, vc)) in train_m.checkpoints.iter().zip(&val_m.checkpoints).enumerate() {
        let train_store = Store::open(required(&tc.train_store, "train_store", &tc.id)?)?;
        let val_stores = vc
            .val_store
            .as_ref()
            .ok_or_else(|| Error::Config(format!("checkpoint {:?} has no val_store", vc.id)))?
            .tasks()
            .into_iter()
            .map(|(t, p)| Ok((t, Store::open(p)?)))
            .collect::<Result<Vec<_>>>()?;

        let quantize_to = match (options.mode, train_store.kind()) {
            (ScoreMode::Qless, StoreKind::Quantized { scheme }) => Some(scheme),
            (ScoreMode::Qless, StoreKind::Float32) => {
                return Err(Error::Scheme(format!(
                    "qless mode needs a quantized training store; {} holds float32 vectors",
                    train_store.path().display()
                )))
            }
            (_, StoreKind::Quantized { scheme }) => {
                return Err(Error::Scheme(format!(
                    "{} mode needs float32 stores; {} holds {scheme} codes",
                    options.mode,
                    train_store.path().display()
                )))
            }
            (_, StoreKind::Float32) => None,
        };
        if ci == 0 {
            scheme = quantize_to;
            train_ids = train_store.ids().to_vec();
            task_ids = val_stores
                .iter()
                .map(|(t, s)| (t.clone(), s.ids().to_vec()))
                .collect();
            acc = Some(InfluenceAccumulator::new(train_ids.clone(), task_ids.clone(), options)?);
        } else {
            if quantize_to != scheme {
                return Err(Error::Scheme(format!(
                    "checkpoint {:?} uses a different encoding than the first checkpoint",
                    tc.id
                )));
            }
            let names: Vec<&str> = val_stores.iter().map(|(t, _)| t.as_str()).collect();
            let expected: Vec<&str> = task_ids.iter().map(|(t, _)| t.as_str()).collect();
            if names != expected {
                return Err(Error::Alignment(format!(
                    "checkpoint {:?} lists tasks {names:?}, first checkpoint lists {expected:?}",
                    tc.id
                )));
            }
        }
        for (label, store) in std::iter::once(("train", &train_store)).chain(val_stores.iter().map(|(t, s)| (t.as_str(), s))) {
            if store.checkpoint_id() != tc.id {
                log::warn!(
                    "{} ({label}) records checkpoint {:?}, manifest says {:?}",
                    store.path().display(),
                    store.checkpoint_id(),
                    tc.id
                );
            }
        }

        let train_set = PreparedSet::from_store(&train_store, &positions(&train_store, &train_ids)?, None)?;
        let val_sets = val_stores
            .iter()
            .zip(&task_ids)
            .map(|((_, s), (_, ids))| PreparedSet::from_store(s, &positions(s, ids)?, quantize_to))
            .collect::<Result<Vec<_>>>()?;
        acc.as_mut()
            .expect("initialized at first checkpoint")
            .add_checkpoint(tc.eta, &train_set, &val_sets)?;
        log::info!("scored checkpoint {:?} ({} train x {} val tasks)", tc.id, train_ids.len(), task_ids.len());
    }

    let table = acc.expect("manifest has checkpoints").finish()?;
    Ok(table.with_provenance(Provenance {
        mode: options.mode.to_string(),
        scheme: scheme.map(|s| s.to_string()),
        manifest_hash: None,
    }))
}

/// Maps sample id to row index for a score table.
pub fn row_index(table: &ScoreTable) -> HashMap<&str, usize> {
    table
        .train_ids()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect()
}
