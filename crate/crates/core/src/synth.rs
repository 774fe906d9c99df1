//! Synthetic gradient corpora with planted structure, a brute-force
//! full-precision scoring oracle, and the quantization fidelity sweep.
//!
//! Each task `t` has a centroid `c_{t,i}` per checkpoint `i`: a task base
//! direction plus a smaller per-checkpoint drift. Validation vectors are
//! `c_{t,i} + sigma * w`. A planted ("influential") train vector of task `t`
//! is `s * c_{t,i} + sqrt((1 - s)^2 + sigma^2) * z`; every other train vector
//! is `sqrt(1 + sigma^2) * z`. All noise draws are `N(0, I/d)`, so with
//! `s = 0` planted and unplanted vectors have the same distribution.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datastore::CheckpointManifest;
use crate::error::{Error, IoContext, Result};
use crate::influence::{
    InfluenceAccumulator, PreparedSet, ScoreMode, ScoreOptions, ScoreTable, ValAggregation,
};
use crate::projector::{Distribution, ProjectionSpec, Projector, RawGradientRecord};
use crate::quantizer::{quantize, zero_bin_fraction_batch, QuantScheme, QuantizedVector};
use crate::rng::{mix64, substream};
use crate::selector::{aggregate, select_top, selection_overlap, SelectionConfig, TieBreak};

const TAG_PLANT: u64 = 0x70_6c61_6e74;
const TAG_BASE: u64 = 0x6261_7365;
const TAG_DRIFT: u64 = 0x64_7269_6674;
const TAG_TRAIN: u64 = 0x74_7261_696e;
const TAG_VAL: u64 = 0x76_616c;
const TAG_PROJ: u64 = 0x7072_6f6a;
const DRIFT: f32 = 0.5;
/// Train vectors generated and projected together in the sweep.
const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub d: usize,
    pub k: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_tasks: usize,
    pub n_checkpoints: usize,
    /// Number of planted train vectors, spread round-robin over tasks.
    pub cluster_count: usize,
    /// Weight of the task centroid in a planted train vector.
    pub cluster_strength: f64,
    pub noise_sigma: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            d: 4096,
            k: 1024,
            n_train: 20_000,
            n_val: 50,
            n_tasks: 3,
            n_checkpoints: 4,
            cluster_count: 1000,
            cluster_strength: 0.1,
            noise_sigma: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("d", self.d),
            ("k", self.k),
            ("n_train", self.n_train),
            ("n_val", self.n_val),
            ("n_tasks", self.n_tasks),
            ("n_checkpoints", self.n_checkpoints),
            ("cluster_count", self.cluster_count),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.k > self.d {
            return Err(Error::Config(format!("k={} exceeds d={}", self.k, self.d)));
        }
        if self.n_val < self.n_tasks {
            return Err(Error::Config(format!(
                "n_val={} leaves some of the {} tasks without validation samples",
                self.n_val, self.n_tasks
            )));
        }
        if self.cluster_count > self.n_train {
            return Err(Error::Config(format!(
                "cluster_count={} exceeds n_train={}",
                self.cluster_count, self.n_train
            )));
        }
        if !(0.0..=1.0).contains(&self.cluster_strength) {
            return Err(Error::Config(format!(
                "cluster_strength must be in [0, 1], got {}",
                self.cluster_strength
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!(
                "noise_sigma must be finite and non-negative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Fraction of train samples that are planted.
    pub fn planted_fraction(&self) -> f64 {
        self.cluster_count as f64 / self.n_train as f64
    }
}

/// A generated corpus. Vectors are regenerated on demand from the seed, so
/// the corpus itself only holds ids, task assignments and centroids.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    config: SynthConfig,
    train_ids: Vec<String>,
    val_ids: Vec<String>,
    tasks: Vec<String>,
    /// Task of each train sample, `None` when not planted.
    planted: Vec<Option<usize>>,
    /// `centroids[i * n_tasks + t]`, each `d` long.
    centroids: Vec<Vec<f32>>,
}

fn normals(rng: &mut impl Rng, out: &mut [f32], scale: f32) {
    for v in out.iter_mut() {
        let z: f32 = rng.sample(StandardNormal);
        *v = z * scale;
    }
}

pub fn gen_synthetic(config: &SynthConfig) -> Result<SynthCorpus> {
    SynthCorpus::new(config)
}

impl SynthCorpus {
    pub fn new(config: &SynthConfig) -> Result<Self> {
        config.validate()?;
        let c = *config;
        let mut order: Vec<usize> = (0..c.n_train).collect();
        order.shuffle(&mut substream(c.seed, TAG_PLANT, 0, 0));
        let mut planted = vec![None; c.n_train];
        for (pos, &r) in order[..c.cluster_count].iter().enumerate() {
            planted[r] = Some(pos % c.n_tasks);
        }
        let unit = 1.0 / (c.d as f32).sqrt();
        let mut centroids = Vec::with_capacity(c.n_checkpoints * c.n_tasks);
        let bases: Vec<Vec<f32>> = (0..c.n_tasks)
            .map(|t| {
                let mut b = vec![0.0; c.d];
                normals(&mut substream(c.seed, TAG_BASE, t as u64, 0), &mut b, unit);
                b
            })
            .collect();
        for i in 0..c.n_checkpoints {
            for (t, base) in bases.iter().enumerate() {
                let mut drift = vec![0.0; c.d];
                normals(
                    &mut substream(c.seed, TAG_DRIFT, t as u64, i as u64),
                    &mut drift,
                    unit * DRIFT,
                );
                centroids.push(base.iter().zip(&drift).map(|(b, u)| b + u).collect());
            }
        }
        Ok(Self {
            config: c,
            train_ids: (0..c.n_train).map(|r| format!("train-{r:06}")).collect(),
            val_ids: (0..c.n_val).map(|j| format!("val-{j:04}")).collect(),
            tasks: (0..c.n_tasks).map(|t| format!("task{t}")).collect(),
            planted,
            centroids,
        })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.config
    }

    pub fn train_ids(&self) -> &[String] {
        &self.train_ids
    }

    pub fn val_ids(&self) -> &[String] {
        &self.val_ids
    }

    pub fn tasks(&self) -> &[String] {
        &self.tasks
    }

    /// Task index of validation sample `j`.
    pub fn val_task(&self, j: usize) -> usize {
        j % self.config.n_tasks
    }

    /// Task index of train sample `r` if it is planted.
    pub fn planted_task(&self, r: usize) -> Option<usize> {
        self.planted[r]
    }

    pub fn planted_ids(&self) -> HashSet<&str> {
        self.planted
            .iter()
            .zip(&self.train_ids)
            .filter(|(p, _)| p.is_some())
            .map(|(_, id)| id.as_str())
            .collect()
    }

    pub fn centroid(&self, checkpoint: usize, task: usize) -> &[f32] {
        &self.centroids[checkpoint * self.config.n_tasks + task]
    }

    pub fn checkpoint_id(&self, i: usize) -> String {
        format!("ckpt-{i}")
    }

    /// Linearly decaying learning rates starting at 2e-5.
    pub fn manifest(&self) -> CheckpointManifest {
        let n = self.config.n_checkpoints;
        CheckpointManifest::from_etas(
            (0..n).map(|i| (self.checkpoint_id(i), 2e-5 * (n - i) as f64 / n as f64)),
        )
        .expect("synthetic learning rates are valid")
    }

    /// Fills `out` (length `d`) with train vector `r` at checkpoint `i`.
    pub fn train_into(&self, checkpoint: usize, r: usize, out: &mut [f32]) {
        let c = &self.config;
        let unit = 1.0 / (c.d as f64).sqrt();
        let mut rng = substream(c.seed, TAG_TRAIN, r as u64, checkpoint as u64);
        let sigma2 = c.noise_sigma * c.noise_sigma;
        match self.planted[r] {
            None => normals(&mut rng, out, ((1.0 + sigma2).sqrt() * unit) as f32),
            Some(t) => {
                let s = c.cluster_strength;
                normals(&mut rng, out, (((1.0 - s).powi(2) + sigma2).sqrt() * unit) as f32);
                let s = s as f32;
                for (o, &m) in out.iter_mut().zip(self.centroid(checkpoint, t)) {
                    *o += s * m;
                }
            }
        }
    }

    /// Fills `out` (length `d`) with validation vector `j` at checkpoint `i`.
    pub fn val_into(&self, checkpoint: usize, j: usize, out: &mut [f32]) {
        let c = &self.config;
        let unit = 1.0 / (c.d as f64).sqrt();
        let mut rng = substream(c.seed, TAG_VAL, j as u64, checkpoint as u64);
        normals(&mut rng, out, (c.noise_sigma * unit) as f32);
        for (o, &m) in out.iter_mut().zip(self.centroid(checkpoint, self.val_task(j))) {
            *o += m;
        }
    }

    pub fn train_records(&self, checkpoint: usize) -> Vec<RawGradientRecord> {
        let ckpt = self.checkpoint_id(checkpoint);
        (0..self.config.n_train)
            .into_par_iter()
            .map(|r| {
                let mut values = vec![0.0; self.config.d];
                self.train_into(checkpoint, r, &mut values);
                RawGradientRecord {
                    sample_id: self.train_ids[r].clone(),
                    checkpoint_id: ckpt.clone(),
                    values,
                }
            })
            .collect()
    }

    pub fn val_records(&self, checkpoint: usize) -> Vec<RawGradientRecord> {
        let ckpt = self.checkpoint_id(checkpoint);
        (0..self.config.n_val)
            .map(|j| {
                let mut values = vec![0.0; self.config.d];
                self.val_into(checkpoint, j, &mut values);
                RawGradientRecord {
                    sample_id: self.val_ids[j].clone(),
                    checkpoint_id: ckpt.clone(),
                    values,
                }
            })
            .collect()
    }

    /// Validation ids grouped by task, in task order.
    pub fn val_groups(&self) -> Vec<(String, Vec<usize>)> {
        self.tasks
            .iter()
            .enumerate()
            .map(|(t, name)| {
                let members = (0..self.config.n_val).filter(|&j| self.val_task(j) == t).collect();
                (name.clone(), members)
            })
            .collect()
    }
}

fn oracle_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            lanes[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    lanes.iter().sum::<f64>() + tail
}

fn unit_f64(v: &[f32]) -> Option<Vec<f64>> {
    let w: Vec<f64> = v.iter().map(|&x| x as f64).collect();
    let n = oracle_dot(&w, &w).sqrt();
    (n > 0.0).then(|| w.iter().map(|x| x / n).collect())
}

/// Brute-force full-precision scorer in the original space. Independent of
/// the influence engine: it normalizes in f64 and sums cosines directly.
/// Zero vectors contribute nothing.
#[derive(Debug, Clone)]
pub struct Oracle {
    train_ids: Vec<String>,
    val_ids: Vec<String>,
    val_tasks: Vec<String>,
    acc: Vec<f64>,
}

impl Oracle {
    /// `val_tasks[j]` names the task of validation sample `j`.
    pub fn new(train_ids: Vec<String>, val_ids: Vec<String>, val_tasks: Vec<String>) -> Result<Self> {
        if val_ids.len() != val_tasks.len() {
            return Err(Error::Dimension {
                context: "validation task labels".into(),
                expected: val_ids.len(),
                actual: val_tasks.len(),
            });
        }
        if val_ids.is_empty() {
            return Err(Error::Argument("no validation samples".into()));
        }
        Ok(Self {
            acc: vec![0.0; train_ids.len() * val_ids.len()],
            train_ids,
            val_ids,
            val_tasks,
        })
    }

    /// Adds `eta * cos(train[r], val[j])` for train rows `row0..row0 + train.len()`.
    pub fn add(&mut self, eta: f64, row0: usize, train: &[&[f32]], val: &[&[f32]]) -> Result<()> {
        let nv = self.val_ids.len();
        if val.len() != nv {
            return Err(Error::Dimension {
                context: "oracle validation vectors".into(),
                expected: nv,
                actual: val.len(),
            });
        }
        if row0 + train.len() > self.train_ids.len() {
            return Err(Error::Argument("oracle train rows out of range".into()));
        }
        let d = val.first().map_or(0, |v| v.len());
        if let Some(bad) = train.iter().chain(val).find(|v| v.len() != d) {
            return Err(Error::Dimension {
                context: "oracle vector".into(),
                expected: d,
                actual: bad.len(),
            });
        }
        let val_unit: Vec<Option<Vec<f64>>> = val.iter().map(|v| unit_f64(v)).collect();
        let rows = &mut self.acc[row0 * nv..(row0 + train.len()) * nv];
        rows.par_chunks_mut(nv).zip(train.par_iter()).for_each(|(row, t)| {
            let Some(tu) = unit_f64(t) else { return };
            for (cell, vu) in row.iter_mut().zip(&val_unit) {
                if let Some(vu) = vu {
                    *cell += eta * oracle_dot(&tu, vu);
                }
            }
        });
        Ok(())
    }

    /// Per-pair accumulated score.
    pub fn pair(&self, r: usize, j: usize) -> f64 {
        self.acc[r * self.val_ids.len() + j]
    }

    /// Per-task table, task columns in order of first appearance.
    pub fn finish(&self, aggregation: ValAggregation) -> Result<ScoreTable> {
        let mut tasks: Vec<String> = Vec::new();
        for t in &self.val_tasks {
            if !tasks.contains(t) {
                tasks.push(t.clone());
            }
        }
        let col: Vec<usize> = self
            .val_tasks
            .iter()
            .map(|t| tasks.iter().position(|x| x == t).unwrap())
            .collect();
        let mut counts = vec![0usize; tasks.len()];
        for &c in &col {
            counts[c] += 1;
        }
        let nv = self.val_ids.len();
        let mut values = vec![0.0; self.train_ids.len() * tasks.len()];
        for r in 0..self.train_ids.len() {
            for j in 0..nv {
                values[r * tasks.len() + col[j]] += self.acc[r * nv + j];
            }
            if aggregation == ValAggregation::Mean {
                for (t, &n) in counts.iter().enumerate() {
                    values[r * tasks.len() + t] /= n as f64;
                }
            }
        }
        ScoreTable::new(self.train_ids.clone(), tasks, values)
    }
}

/// Reference scores for full-precision records. `train[i]` and `val[i]` hold
/// checkpoint `i`'s records, with samples in the same order at every
/// checkpoint; `val_tasks[j]` names the task of validation sample `j`.
pub fn oracle_scores(
    train: &[Vec<RawGradientRecord>],
    val: &[Vec<RawGradientRecord>],
    val_tasks: &[String],
    manifest: &CheckpointManifest,
    aggregation: ValAggregation,
) -> Result<ScoreTable> {
    manifest.validate()?;
    let n = manifest.len();
    if train.len() != n || val.len() != n {
        return Err(Error::Dimension {
            context: "checkpoints".into(),
            expected: n,
            actual: train.len().min(val.len()),
        });
    }
    let ids = |recs: &[RawGradientRecord]| -> Vec<String> {
        recs.iter().map(|r| r.sample_id.clone()).collect()
    };
    let train_ids = ids(&train[0]);
    let val_ids = ids(&val[0]);
    for i in 1..n {
        if ids(&train[i]) != train_ids || ids(&val[i]) != val_ids {
            return Err(Error::Data(format!(
                "sample order differs between checkpoint 0 and checkpoint {i}"
            )));
        }
    }
    let mut oracle = Oracle::new(train_ids, val_ids, val_tasks.to_vec())?;
    for (i, eta) in manifest.etas().into_iter().enumerate() {
        let t: Vec<&[f32]> = train[i].iter().map(|r| r.values.as_slice()).collect();
        let v: Vec<&[f32]> = val[i].iter().map(|r| r.values.as_slice()).collect();
        oracle.add(eta, 0, &t, &v)?;
    }
    oracle.finish(aggregation)
}

/// Spearman rank correlation with average ranks for ties. `NaN` when either
/// side is constant or the inputs are shorter than two.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "spearman inputs differ in length");
    if a.len() < 2 {
        return f64::NAN;
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return f64::NAN;
    }
    sab / (saa * sbb).sqrt()
}

fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = r;
        }
        i = j + 1;
    }
    ranks
}

/// How projected vectors are stored before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    /// Projected float vectors scored in `less_fp` mode.
    Full,
    Quantized(QuantScheme),
}

impl Encoding {
    pub fn label(&self) -> String {
        match self {
            Encoding::Full => "full".into(),
            Encoding::Quantized(s) => s.to_string(),
        }
    }

    /// The encodings of the standard sweep: full precision, absmax and
    /// absmean at 8/4/2 bits, and sign.
    pub fn standard() -> Vec<Encoding> {
        let mut out = vec![Encoding::Full];
        for bits in [8, 4, 2] {
            out.push(Encoding::Quantized(QuantScheme::absmax(bits).unwrap()));
        }
        for bits in [8, 4, 2] {
            out.push(Encoding::Quantized(QuantScheme::absmean(bits).unwrap()));
        }
        out.push(Encoding::Quantized(QuantScheme::sign()));
        out
    }
}

/// Fidelity of one encoding on one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityRow {
    pub seed: u64,
    pub encoding: String,
    pub method: String,
    /// `None` for full precision.
    pub bits: Option<u8>,
    pub spearman_vs_less_fp: f64,
    pub spearman_vs_oracle: f64,
    /// `|S ∩ S_ref| / |S|` for the top-`p` selections.
    pub overlap_vs_less_fp: f64,
    pub overlap_vs_oracle: f64,
    pub zero_bin_fraction: Option<f64>,
    /// Fraction of planted samples among the top `cluster_count`.
    pub planted_recovery: f64,
    /// Largest per-pair score difference to `less_fp`, divided by the sum of
    /// learning rates.
    pub max_pair_deviation: f64,
}

/// Per-seed reference numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedBaseline {
    pub seed: u64,
    pub oracle_planted_recovery: f64,
    pub less_fp_spearman_vs_oracle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub config: SynthConfig,
    pub fraction: f64,
    pub baselines: Vec<SeedBaseline>,
    pub rows: Vec<FidelityRow>,
}

impl FidelityReport {
    pub fn row(&self, seed: u64, encoding: &Encoding) -> Option<&FidelityRow> {
        let label = encoding.label();
        self.rows.iter().find(|r| r.seed == seed && r.encoding == label)
    }

    /// Rows for one encoding across seeds.
    pub fn rows_for(&self, encoding: &Encoding) -> Vec<&FidelityRow> {
        let label = encoding.label();
        self.rows.iter().filter(|r| r.encoding == label).collect()
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = BufWriter::new(File::create(path).at(path)?);
        serde_json::to_writer_pretty(&mut w, self)
            .map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").at(path)?;
        w.flush().at(path)
    }

    /// One row per encoding and seed.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path).at(path)?));
        let err = |e: csv::Error| Error::Write(format!("{}: {e}", path.display()));
        for row in &self.rows {
            w.serialize(row).map_err(err)?;
        }
        w.flush().at(path)
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Median of a metric over seeds for one encoding.
pub fn median_over_seeds(report: &FidelityReport, encoding: &Encoding, metric: impl Fn(&FidelityRow) -> f64) -> f64 {
    median(report.rows_for(encoding).into_iter().map(metric).collect())
}

struct Projected {
    /// `train[i]` is checkpoint `i`, row-major `n_train x k`.
    train: Vec<Vec<f32>>,
    val: Vec<Vec<f32>>,
}

/// Generates the corpus checkpoint by checkpoint, feeding the oracle with the
/// original vectors and keeping only their projections.
fn project_corpus(corpus: &SynthCorpus, oracle: &mut Oracle) -> Result<Projected> {
    let c = corpus.config();
    let projector = Projector::new(ProjectionSpec::new(
        mix64(c.seed ^ TAG_PROJ),
        c.d,
        c.k,
        Distribution::Rademacher,
    ))?;
    let etas = corpus.manifest().etas();
    let mut out = Projected {
        train: Vec::with_capacity(c.n_checkpoints),
        val: Vec::with_capacity(c.n_checkpoints),
    };
    for (i, &eta) in etas.iter().enumerate() {
        let val: Vec<f32> = corpus.val_records(i).into_iter().flat_map(|r| r.values).collect();
        let val_rows: Vec<&[f32]> = val.chunks_exact(c.d).collect();
        out.val.push(projector.project_batch(&val_rows)?.concat());
        let mut train = Vec::with_capacity(c.n_train * c.k);
        let mut buf = vec![0.0f32; CHUNK * c.d];
        for row0 in (0..c.n_train).step_by(CHUNK) {
            let n = CHUNK.min(c.n_train - row0);
            buf[..n * c.d]
                .par_chunks_mut(c.d)
                .enumerate()
                .for_each(|(r, v)| corpus.train_into(i, row0 + r, v));
            let rows: Vec<&[f32]> = buf[..n * c.d].chunks_exact(c.d).collect();
            let t0 = std::time::Instant::now();
            oracle.add(eta, row0, &rows, &val_rows)?;
            let t1 = std::time::Instant::now();
            for p in projector.project_batch(&rows)? {
                train.extend_from_slice(&p);
            }
            log::trace!("oracle {:.1?} projection {:.1?}", t1 - t0, t1.elapsed());
        }
        out.train.push(train);
    }
    Ok(out)
}

struct Scored {
    table: ScoreTable,
    pairs: Vec<f64>,
    zero_bin: Option<f64>,
}

fn score_encoding(corpus: &SynthCorpus, projected: &Projected, encoding: Encoding) -> Result<Scored> {
    let c = corpus.config();
    let groups = corpus.val_groups();
    let tasks = groups
        .iter()
        .map(|(name, members)| {
            (name.clone(), members.iter().map(|&j| corpus.val_ids()[j].clone()).collect())
        })
        .collect();
    let mode = match encoding {
        Encoding::Full => ScoreMode::LessFp,
        Encoding::Quantized(_) => ScoreMode::Qless,
    };
    let mut acc = InfluenceAccumulator::new(corpus.train_ids().to_vec(), tasks, ScoreOptions::new(mode))?;
    let (mut zeros, mut total) = (0.0, 0usize);
    for (i, eta) in corpus.manifest().etas().into_iter().enumerate() {
        let rows: Vec<&[f32]> = projected.train[i].chunks_exact(c.k).collect();
        let val_rows: Vec<&[f32]> = projected.val[i].chunks_exact(c.k).collect();
        let pick = |members: &[usize]| members.iter().map(|&j| val_rows[j]).collect::<Vec<_>>();
        let (train_set, val_sets) = match encoding {
            Encoding::Full => (
                PreparedSet::from_float(c.k, rows.iter().copied())?,
                groups
                    .iter()
                    .map(|(_, m)| PreparedSet::from_float(c.k, pick(m)))
                    .collect::<Result<Vec<_>>>()?,
            ),
            Encoding::Quantized(scheme) => {
                let codes: Vec<QuantizedVector> = rows
                    .par_iter()
                    .map(|r| quantize(r, scheme))
                    .collect::<Result<_>>()?;
                if scheme.has_zero_bin() {
                    zeros += zero_bin_fraction_batch(&codes)? * codes.len() as f64;
                    total += codes.len();
                }
                (
                    PreparedSet::from_quantized(scheme, c.k, &codes)?,
                    groups
                        .iter()
                        .map(|(_, m)| PreparedSet::quantizing(scheme, c.k, pick(m)))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
        };
        acc.add_checkpoint(eta, &train_set, &val_sets)?;
    }
    // Pairs in original validation order, for per-pair comparisons.
    let mut pairs = vec![0.0; c.n_train * c.n_val];
    let mut col = 0;
    for (_, members) in &groups {
        for &j in members {
            for r in 0..c.n_train {
                pairs[r * c.n_val + j] = acc.pair(r, col);
            }
            col += 1;
        }
    }
    Ok(Scored {
        table: acc.finish()?,
        pairs,
        zero_bin: (total > 0).then(|| zeros / total as f64),
    })
}

fn final_scores(table: &ScoreTable) -> Result<Vec<(String, f64)>> {
    aggregate(table, &SelectionConfig::default())
}

fn recovery(scores: &[(String, f64)], corpus: &SynthCorpus) -> Result<f64> {
    let planted = corpus.planted_ids();
    let sel = select_top(scores, corpus.config().planted_fraction(), TieBreak::BySampleId)?;
    let hits = sel.selected.iter().filter(|s| planted.contains(s.sample_id.as_str())).count();
    Ok(hits as f64 / planted.len() as f64)
}

/// Runs project, quantize, score and select for every encoding on the corpus
/// of `config.seed`, comparing each against projected `less_fp` scores and
/// against the oracle on the original vectors.
pub fn fidelity_sweep(config: &SynthConfig, encodings: &[Encoding], p: f64) -> Result<FidelityReport> {
    SelectionConfig::with_fraction(p)?;
    let corpus = SynthCorpus::new(config)?;
    let c = *config;
    let val_tasks: Vec<String> = (0..c.n_val).map(|j| corpus.tasks()[corpus.val_task(j)].clone()).collect();
    let mut oracle = Oracle::new(corpus.train_ids().to_vec(), corpus.val_ids().to_vec(), val_tasks)?;
    let start = std::time::Instant::now();
    let projected = project_corpus(&corpus, &mut oracle)?;
    log::debug!("seed {}: generated and projected in {:.1?}", c.seed, start.elapsed());
    let oracle_scores = final_scores(&oracle.finish(ValAggregation::Mean)?)?;
    let reference = score_encoding(&corpus, &projected, Encoding::Full)?;
    let ref_scores = final_scores(&reference.table)?;
    let values = |s: &[(String, f64)]| s.iter().map(|x| x.1).collect::<Vec<_>>();
    let (oracle_v, ref_v) = (values(&oracle_scores), values(&ref_scores));
    let oracle_sel = select_top(&oracle_scores, p, TieBreak::BySampleId)?;
    let ref_sel = select_top(&ref_scores, p, TieBreak::BySampleId)?;
    let eta_sum = corpus.manifest().eta_sum();

    let rows = encodings
        .par_iter()
        .map(|&enc| -> Result<FidelityRow> {
            let scored = if enc == Encoding::Full {
                None
            } else {
                Some(score_encoding(&corpus, &projected, enc)?)
            };
            let scored = scored.as_ref().unwrap_or(&reference);
            log::debug!("seed {}: scored {} at {:.1?}", c.seed, enc.label(), start.elapsed());
            let scores = final_scores(&scored.table)?;
            let v = values(&scores);
            let sel = select_top(&scores, p, TieBreak::BySampleId)?;
            let deviation = scored
                .pairs
                .iter()
                .zip(&reference.pairs)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let (method, bits) = match enc {
                Encoding::Full => ("none".to_string(), None),
                Encoding::Quantized(s) => (s.method().to_string(), Some(s.bits())),
            };
            Ok(FidelityRow {
                seed: c.seed,
                encoding: enc.label(),
                method,
                bits,
                spearman_vs_less_fp: spearman(&v, &ref_v),
                spearman_vs_oracle: spearman(&v, &oracle_v),
                overlap_vs_less_fp: selection_overlap(&sel, &ref_sel)?.fraction,
                overlap_vs_oracle: selection_overlap(&sel, &oracle_sel)?.fraction,
                zero_bin_fraction: scored.zero_bin,
                planted_recovery: recovery(&scores, &corpus)?,
                max_pair_deviation: deviation / eta_sum,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(FidelityReport {
        config: c,
        fraction: p,
        baselines: vec![SeedBaseline {
            seed: c.seed,
            oracle_planted_recovery: recovery(&oracle_scores, &corpus)?,
            less_fp_spearman_vs_oracle: spearman(&ref_v, &oracle_v),
        }],
        rows,
    })
}

/// [`fidelity_sweep`] over several seeds, merged into one report.
pub fn fidelity_sweep_seeds(
    config: &SynthConfig,
    seeds: &[u64],
    encodings: &[Encoding],
    p: f64,
) -> Result<FidelityReport> {
    let mut merged = FidelityReport {
        config: *config,
        fraction: p,
        baselines: Vec::new(),
        rows: Vec::new(),
    };
    for &seed in seeds {
        let r = fidelity_sweep(&config.with_seed(seed), encodings, p)?;
        log::info!("fidelity sweep seed {seed} done");
        merged.baselines.extend(r.baselines);
        merged.rows.extend(r.rows);
    }
    Ok(merged)
}
