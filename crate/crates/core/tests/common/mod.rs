//! Helpers shared by the integration test targets: independent oracles and
//! small on-disk corpora.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use qgrad::datastore::{CheckpointEntry, CheckpointManifest, StoreKind, StoreWriter, ValStores};
use qgrad::quantizer::{quantize, Method, QuantScheme, QuantizedVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Nearest point of the integer grid `-alpha..=alpha` to `t`, ties away
/// from zero, found by exhaustive search.
pub fn nearest_code(t: f64, alpha: i32) -> i8 {
    let mut best = 0i32;
    let mut best_dist = f64::INFINITY;
    for q in -alpha..=alpha {
        let dist = (t - q as f64).abs();
        if dist < best_dist || (dist == best_dist && q.abs() > best.abs()) {
            best = q;
            best_dist = dist;
        }
    }
    best as i8
}

/// Scalar reference quantizer: returns codes and scale.
pub fn oracle_quantize(v: &[f32], method: Method, bits: u8) -> (Vec<i8>, f32) {
    let alpha = (1i32 << (bits - 1)) - 1;
    let mut max_abs = 0f32;
    let mut sum_abs = 0f64;
    for &x in v {
        if x.abs() > max_abs {
            max_abs = x.abs();
        }
        sum_abs += x.abs() as f64;
    }
    let mean_abs = (sum_abs / v.len() as f64) as f32;
    match method {
        Method::Absmax => {
            let s = max_abs as f64;
            let codes = v.iter().map(|&x| nearest_code(alpha as f64 * x as f64 / s, alpha)).collect();
            (codes, max_abs)
        }
        Method::Absmean => {
            let s = mean_abs as f64;
            let codes = v.iter().map(|&x| nearest_code(x as f64 / s, alpha)).collect();
            (codes, mean_abs)
        }
        Method::Sign => {
            let codes = v.iter().map(|&x| if x >= 0.0 { 1 } else { -1 }).collect();
            (codes, mean_abs)
        }
    }
}

pub fn naive_cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut ab = 0f64;
    let mut aa = 0f64;
    let mut bb = 0f64;
    for i in 0..a.len() {
        ab += a[i] as f64 * b[i] as f64;
        aa += a[i] as f64 * a[i] as f64;
        bb += b[i] as f64 * b[i] as f64;
    }
    ab / (aa.sqrt() * bb.sqrt())
}

/// Inputs of the committed golden store files.
pub const GOLDEN_VALUES: [[f32; 8]; 3] = [
    [0.5, -1.0, 0.25, 0.0, 0.75, -0.125, 0.3, -0.6],
    [2.0, 1.0, -3.0, 0.5, -0.5, 0.0, 1.5, -2.5],
    [0.0; 8],
];

pub fn golden_vectors(scheme: QuantScheme) -> Vec<QuantizedVector> {
    GOLDEN_VALUES
        .iter()
        .enumerate()
        .map(|(i, v)| quantize(v, scheme).unwrap().with_ids(format!("sample-{i}"), "ckpt-0"))
        .collect()
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Task name, its validation ids, and `[checkpoint][sample]` vectors.
pub type Task = (String, Vec<String>, Vec<Vec<Vec<f32>>>);

/// Gradients of a small corpus, indexed `[checkpoint][sample]`.
#[derive(Clone)]
pub struct Corpus {
    pub etas: Vec<f64>,
    pub train_ids: Vec<String>,
    pub train: Vec<Vec<Vec<f32>>>,
    pub tasks: Vec<Task>,
}

impl Corpus {
    pub fn gaussian(seed: u64, k: usize, n_train: usize, val_per_task: &[usize], etas: &[f64]) -> Self {
        let mut r = rng(seed);
        let train = etas
            .iter()
            .map(|_| (0..n_train).map(|_| gaussian(&mut r, k)).collect())
            .collect();
        let tasks = val_per_task
            .iter()
            .enumerate()
            .map(|(t, &n)| {
                let ids = (0..n).map(|j| format!("t{t}-v{j:03}")).collect();
                let vecs = etas.iter().map(|_| (0..n).map(|_| gaussian(&mut r, k)).collect()).collect();
                (format!("task{t}"), ids, vecs)
            })
            .collect();
        Self {
            etas: etas.to_vec(),
            train_ids: (0..n_train).map(|i| format!("s{i:05}")).collect(),
            train,
            tasks,
        }
    }

    pub fn k(&self) -> usize {
        self.train[0][0].len()
    }

    /// Mean over each task's validation samples of the eta-weighted cosine
    /// sum, computed directly. Indexed `[train][task]`.
    pub fn oracle_less(&self) -> Vec<Vec<f64>> {
        (0..self.train_ids.len())
            .map(|r| {
                self.tasks
                    .iter()
                    .map(|(_, ids, vecs)| {
                        let mut total = 0.0;
                        for j in 0..ids.len() {
                            for (i, eta) in self.etas.iter().enumerate() {
                                total += eta * naive_cosine(&self.train[i][r], &vecs[i][j]);
                            }
                        }
                        total / ids.len() as f64
                    })
                    .collect()
            })
            .collect()
    }

    /// Writes one train store and one store per task for every checkpoint,
    /// plus `manifest.json`. Train stores are quantized with `scheme` when
    /// given; validation stores are always float32.
    pub fn write(&self, dir: &Path, scheme: Option<QuantScheme>) -> PathBuf {
        self.write_scaled(dir, scheme, 1.0)
    }

    /// [`Corpus::write`] with every stored quantization scale multiplied by `factor`.
    pub fn write_scaled(&self, dir: &Path, scheme: Option<QuantScheme>, factor: f32) -> PathBuf {
        let k = self.k();
        let mut entries = Vec::new();
        for (i, eta) in self.etas.iter().enumerate() {
            let ckpt = format!("ckpt-{i}");
            let train_name = format!("train-{i}.qgs");
            let kind = match scheme {
                Some(s) => StoreKind::Quantized { scheme: s },
                None => StoreKind::Float32,
            };
            let mut w = StoreWriter::create(dir.join(&train_name), kind, k, &ckpt).unwrap();
            for (id, v) in self.train_ids.iter().zip(&self.train[i]) {
                match scheme {
                    Some(s) => {
                        let mut qv = quantize(v, s).unwrap().with_ids(id, &ckpt);
                        qv.scale *= factor;
                        w.push_quantized(&qv).unwrap()
                    }
                    None => w.push_float(id, v).unwrap(),
                }
            }
            w.finish().unwrap();
            let mut val = BTreeMap::new();
            for (task, ids, vecs) in &self.tasks {
                let name = format!("val-{task}-{i}.qgs");
                let mut w = StoreWriter::create(dir.join(&name), StoreKind::Float32, k, &ckpt).unwrap();
                for (id, v) in ids.iter().zip(&vecs[i]) {
                    w.push_float(id, v).unwrap();
                }
                w.finish().unwrap();
                val.insert(task.clone(), PathBuf::from(name));
            }
            entries.push(CheckpointEntry {
                id: ckpt,
                eta: *eta,
                train_store: Some(PathBuf::from(train_name)),
                val_store: Some(ValStores::Tasks(val)),
            });
        }
        let path = dir.join("manifest.json");
        CheckpointManifest { checkpoints: entries }.save(&path).unwrap();
        path
    }
}

/// Ranks with ties averaged, then Pearson correlation of the ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(x: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
        let mut out = vec![0.0; x.len()];
        let mut s = 0;
        while s < idx.len() {
            let mut e = s;
            while e + 1 < idx.len() && x[idx[e + 1]] == x[idx[s]] {
                e += 1;
            }
            let avg = (s + e) as f64 / 2.0;
            for &i in &idx[s..=e] {
                out[i] = avg;
            }
            s = e + 1;
        }
        out
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma).powi(2);
        vb += (rb[i] - mb).powi(2);
    }
    cov / (va * vb).sqrt()
}
