//! Seeded random linear map `R: R^d -> R^k`.
//!
//! Entry `(row, col)` of `R` is derived only from `(seed, row, col)`, so the
//! matrix is generated one column block at a time and never held in full.
//! Entries are either Rademacher `±1/sqrt(k)` or Gaussian `N(0, 1/k)`, which
//! makes projected inner products unbiased estimates of the originals.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{hash3, mix64, open_unit_f64, unit_f64};

/// Target size of one generated column block of `R`.
const BLOCK_BYTES: usize = 4 << 20;
const GAUSS_TAG: u64 = 0x6761_7573_735F_5231;
/// Output rows accumulated in registers at a time.
const TILE: usize = 64;
/// Vectors sharing each loaded tile of `R`.
const GROUP: usize = 4;

#[inline(always)]
fn axpy_portable(out: &mut [f32], column: &[f32], a: f32) {
    for (o, &r) in out.iter_mut().zip(column) {
        *o += a * r;
    }
}

/// `acc[v] += xs[v][j] * tiles[j]` for every column `j`, in column order.
#[inline(always)]
fn tile_portable<const V: usize>(acc: &mut [[f32; TILE]; V], xs: [&[f32]; V], tiles: &[f32]) {
    let mut local = *acc;
    let n = tiles.len() / TILE;
    for x in xs {
        assert!(x.len() >= n);
    }
    for j in 0..n {
        let col: &[f32; TILE] = tiles[j * TILE..(j + 1) * TILE].try_into().unwrap();
        for v in 0..V {
            let a = xs[v][j];
            for l in 0..TILE {
                local[v][l] += a * col[l];
            }
        }
    }
    *acc = local;
}

// Separate multiply and add (no FMA) keeps every dispatch path bit-identical.
#[cfg(target_arch = "x86_64")]
mod simd {
    use super::*;

    #[target_feature(enable = "avx512f")]
    pub unsafe fn axpy_avx512(out: &mut [f32], column: &[f32], a: f32) {
        axpy_portable(out, column, a)
    }

    #[target_feature(enable = "avx2")]
    pub unsafe fn axpy_avx2(out: &mut [f32], column: &[f32], a: f32) {
        axpy_portable(out, column, a)
    }

    #[target_feature(enable = "avx512f")]
    pub unsafe fn tile_avx512<const V: usize>(acc: &mut [[f32; TILE]; V], xs: [&[f32]; V], tiles: &[f32]) {
        tile_portable(acc, xs, tiles)
    }

    #[target_feature(enable = "avx2")]
    pub unsafe fn tile_avx2<const V: usize>(acc: &mut [[f32; TILE]; V], xs: [&[f32]; V], tiles: &[f32]) {
        tile_portable(acc, xs, tiles)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Level {
    Portable,
    Avx2,
    Avx512,
}

fn simd_level() -> Level {
    #[cfg(target_arch = "x86_64")]
    {
        use std::sync::OnceLock;
        static LEVEL: OnceLock<Level> = OnceLock::new();
        *LEVEL.get_or_init(|| {
            if is_x86_feature_detected!("avx512f") {
                Level::Avx512
            } else if is_x86_feature_detected!("avx2") {
                Level::Avx2
            } else {
                Level::Portable
            }
        })
    }
    #[cfg(not(target_arch = "x86_64"))]
    Level::Portable
}

#[inline]
fn axpy(out: &mut [f32], column: &[f32], a: f32) {
    // SAFETY: each branch runs only when the CPU reports the feature.
    #[cfg(target_arch = "x86_64")]
    match simd_level() {
        Level::Avx512 => return unsafe { simd::axpy_avx512(out, column, a) },
        Level::Avx2 => return unsafe { simd::axpy_avx2(out, column, a) },
        Level::Portable => {}
    }
    axpy_portable(out, column, a)
}

#[inline]
fn tile<const V: usize>(acc: &mut [[f32; TILE]; V], xs: [&[f32]; V], tiles: &[f32]) {
    // SAFETY: as in `axpy`.
    #[cfg(target_arch = "x86_64")]
    match simd_level() {
        Level::Avx512 => return unsafe { simd::tile_avx512(acc, xs, tiles) },
        Level::Avx2 => return unsafe { simd::tile_avx2(acc, xs, tiles) },
        Level::Portable => {}
    }
    tile_portable(acc, xs, tiles)
}

/// Accumulates columns `c0..c0 + width` into `outs` for full row tiles.
/// `tiled` holds the block as `[tile][column][TILE]`.
fn project_tiles<const V: usize>(outs: &mut [Vec<f32>], xs: &[&[f32]], tiled: &[f32], c0: usize, width: usize) {
    let full = outs[0].len() / TILE;
    let xs: [&[f32]; V] = std::array::from_fn(|v| &xs[v][c0..c0 + width]);
    for t in 0..full {
        let rows = t * TILE..(t + 1) * TILE;
        let mut acc: [[f32; TILE]; V] = std::array::from_fn(|v| outs[v][rows.clone()].try_into().unwrap());
        tile(&mut acc, xs, &tiled[t * width * TILE..(t + 1) * width * TILE]);
        for (out, a) in outs.iter_mut().zip(&acc) {
            out[rows.clone()].copy_from_slice(a);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    #[default]
    Rademacher,
    Gaussian,
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Distribution::Rademacher => "rademacher",
            Distribution::Gaussian => "gaussian",
        })
    }
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rademacher" => Ok(Distribution::Rademacher),
            "gaussian" => Ok(Distribution::Gaussian),
            other => Err(Error::Config(format!("unknown distribution {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProjectionSpec {
    pub seed: u64,
    pub input_dim: usize,
    pub output_dim: usize,
    pub distribution: Distribution,
}

impl ProjectionSpec {
    pub fn new(seed: u64, input_dim: usize, output_dim: usize, distribution: Distribution) -> Self {
        Self {
            seed,
            input_dim,
            output_dim,
            distribution,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config(format!(
                "projection dimensions must be positive (d={}, k={})",
                self.input_dim, self.output_dim
            )));
        }
        if self.output_dim > self.input_dim {
            return Err(Error::Config(format!(
                "output dimension k={} exceeds input dimension d={}",
                self.output_dim, self.input_dim
            )));
        }
        Ok(())
    }
}

/// One sample's dense gradient at one checkpoint, before projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawGradientRecord {
    pub sample_id: String,
    #[serde(default)]
    pub checkpoint_id: String,
    pub values: Vec<f32>,
}

pub(crate) fn check_finite(values: &[f32], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::Data(format!(
            "{what}: non-finite value {} at index {i}",
            values[i]
        ))),
    }
}

/// Reusable handle for a [`ProjectionSpec`]. Immutable and `Sync`.
#[derive(Debug, Clone)]
pub struct Projector {
    spec: ProjectionSpec,
    scale: f32,
    block_cols: usize,
}

impl Projector {
    pub fn new(spec: ProjectionSpec) -> Result<Self> {
        spec.validate()?;
        let k = spec.output_dim;
        let cols = (BLOCK_BYTES / (4 * k)).max(64) / 64 * 64;
        Ok(Self {
            spec,
            scale: (1.0 / (k as f64).sqrt()) as f32,
            block_cols: cols,
        })
    }

    /// Overrides the number of columns of `R` generated per block.
    /// Must be a positive multiple of 64. Results do not depend on it.
    pub fn with_block_cols(mut self, cols: usize) -> Result<Self> {
        if cols == 0 || cols % 64 != 0 {
            return Err(Error::Config(format!(
                "block size must be a positive multiple of 64, got {cols}"
            )));
        }
        self.block_cols = cols;
        Ok(self)
    }

    pub fn spec(&self) -> &ProjectionSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    /// Entry `(row, col)` of `R`, with `row < k` and `col < d`.
    pub fn entry(&self, row: usize, col: usize) -> f32 {
        match self.spec.distribution {
            Distribution::Rademacher => {
                let word = hash3(self.spec.seed, row as u64, (col / 64) as u64);
                if (word >> (col % 64)) & 1 == 1 {
                    self.scale
                } else {
                    -self.scale
                }
            }
            Distribution::Gaussian => self.gaussian_entry(row, col),
        }
    }

    #[inline]
    fn gaussian_entry(&self, row: usize, col: usize) -> f32 {
        // Box-Muller on two uniforms drawn from one counter.
        let bits = hash3(self.spec.seed ^ GAUSS_TAG, row as u64, col as u64);
        let u1 = open_unit_f64(bits);
        let u2 = unit_f64(mix64(bits));
        let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        (z / (self.spec.output_dim as f64).sqrt()) as f32
    }

    /// Fills `block` (column-major, `cols * k`) with columns `c0..c0 + cols`.
    fn fill_block(&self, c0: usize, cols: usize, block: &mut [f32]) {
        let k = self.spec.output_dim;
        debug_assert_eq!(c0 % 64, 0);
        // Each 64-column group owns a contiguous slice of the block.
        block[..cols * k]
            .par_chunks_mut(64 * k)
            .enumerate()
            .for_each(|(g, chunk)| {
                let base = c0 + g * 64;
                let width = chunk.len() / k;
                match self.spec.distribution {
                    Distribution::Rademacher => {
                        let word_idx = (base / 64) as u64;
                        for row in 0..k {
                            let word = hash3(self.spec.seed, row as u64, word_idx);
                            for j in 0..width {
                                chunk[j * k + row] = if (word >> j) & 1 == 1 {
                                    self.scale
                                } else {
                                    -self.scale
                                };
                            }
                        }
                    }
                    Distribution::Gaussian => {
                        for j in 0..width {
                            for row in 0..k {
                                chunk[j * k + row] = self.gaussian_entry(row, base + j);
                            }
                        }
                    }
                }
            });
    }

    fn check_input(&self, values: &[f32], what: &str) -> Result<()> {
        if values.len() != self.spec.input_dim {
            return Err(Error::Dimension {
                context: what.to_string(),
                expected: self.spec.input_dim,
                actual: values.len(),
            });
        }
        check_finite(values, what)
    }

    pub fn project(&self, rec: &RawGradientRecord) -> Result<Vec<f32>> {
        self.check_input(&rec.values, &format!("sample {:?}", rec.sample_id))?;
        Ok(self.project_unchecked(&[rec.values.as_slice()]).pop().unwrap())
    }

    pub fn project_values(&self, values: &[f32]) -> Result<Vec<f32>> {
        self.check_input(values, "input vector")?;
        Ok(self.project_unchecked(&[values]).pop().unwrap())
    }

    /// Projects many vectors, generating each block of `R` once per call.
    pub fn project_batch(&self, inputs: &[&[f32]]) -> Result<Vec<Vec<f32>>> {
        for (i, v) in inputs.iter().enumerate() {
            self.check_input(v, &format!("batch item {i}"))?;
        }
        Ok(self.project_unchecked(inputs))
    }

    fn project_unchecked(&self, inputs: &[&[f32]]) -> Vec<Vec<f32>> {
        let (d, k) = (self.spec.input_dim, self.spec.output_dim);
        let mut outputs = vec![vec![0f32; k]; inputs.len()];
        let cols = self.block_cols.min(d.div_ceil(64) * 64);
        let mut block = vec![0f32; cols * k];
        let full = k / TILE * TILE;
        let mut tiled = vec![0f32; cols * full];
        let mut c0 = 0;
        while c0 < d {
            let width = cols.min(d - c0);
            self.fill_block(c0, width, &mut block);
            let block = &block[..width * k];
            for t in 0..full / TILE {
                let dst = &mut tiled[t * width * TILE..(t + 1) * width * TILE];
                for (j, chunk) in dst.chunks_exact_mut(TILE).enumerate() {
                    chunk.copy_from_slice(&block[j * k + t * TILE..j * k + (t + 1) * TILE]);
                }
            }
            let tiled = &tiled[..width * full];
            // Every out[r] accumulates strictly in column order, so the result
            // is independent of block size, tiling, grouping and thread count.
            outputs
                .par_chunks_mut(GROUP)
                .zip(inputs.par_chunks(GROUP))
                .for_each(|(outs, xs)| {
                    if outs.len() == GROUP {
                        project_tiles::<GROUP>(outs, xs, tiled, c0, width);
                    } else {
                        for (out, x) in outs.chunks_mut(1).zip(xs.chunks(1)) {
                            project_tiles::<1>(out, x, tiled, c0, width);
                        }
                    }
                    if full < k {
                        for (j, column) in block.chunks_exact(k).enumerate() {
                            for (out, x) in outs.iter_mut().zip(xs) {
                                axpy(&mut out[full..], &column[full..], x[c0 + j]);
                            }
                        }
                    }
                });
            c0 += width;
        }
        outputs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(d: usize, k: usize) -> ProjectionSpec {
        ProjectionSpec::new(7, d, k, Distribution::Rademacher)
    }

    #[test]
    fn rejects_degenerate_dimensions() {
        assert!(matches!(Projector::new(spec(0, 1)), Err(Error::Config(_))));
        assert!(matches!(Projector::new(spec(4, 0)), Err(Error::Config(_))));
        assert!(matches!(Projector::new(spec(4, 5)), Err(Error::Config(_))));
        assert!(Projector::new(spec(4, 4)).is_ok());
    }

    #[test]
    fn same_spec_same_behavior() {
        let a = Projector::new(spec(4, 4)).unwrap();
        let b = Projector::new(spec(4, 4)).unwrap();
        let x = [0.5f32, -1.25, 3.0, 0.125];
        assert_eq!(a.project_values(&x).unwrap(), b.project_values(&x).unwrap());
    }

    #[test]
    fn zero_maps_to_zero() {
        let p = Projector::new(spec(300, 17)).unwrap();
        assert_eq!(p.project_values(&[0.0; 300]).unwrap(), vec![0.0; 17]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = Projector::new(spec(6, 3)).unwrap();
        assert!(matches!(
            p.project_values(&[1.0; 5]),
            Err(Error::Dimension { expected: 6, actual: 5, .. })
        ));
        let mut x = [0.0f32; 6];
        x[2] = f32::NAN;
        assert!(matches!(p.project_values(&x), Err(Error::Data(_))));
        x[2] = f32::INFINITY;
        assert!(matches!(p.project_values(&x), Err(Error::Data(_))));
    }

    #[test]
    fn rademacher_entries_have_fixed_magnitude() {
        let p = Projector::new(spec(200, 9)).unwrap();
        let s = 1.0 / 3.0f32;
        for r in 0..9 {
            for c in 0..200 {
                assert_eq!(p.entry(r, c).abs(), s);
            }
        }
    }

    #[test]
    fn block_size_must_be_multiple_of_64() {
        let p = Projector::new(spec(10, 2)).unwrap();
        assert!(p.clone().with_block_cols(100).is_err());
        assert!(p.clone().with_block_cols(0).is_err());
        assert!(p.with_block_cols(128).is_ok());
    }

    #[test]
    fn tiled_matches_columnwise() {
        // k = 80 exercises one full row tile plus a 16-row tail.
        let p = Projector::new(spec(300, 80)).unwrap();
        let inputs: Vec<Vec<f32>> = (0..7)
            .map(|i| (0..300).map(|c| ((i * 300 + c) as f32 * 0.013).sin()).collect())
            .collect();
        let rows: Vec<&[f32]> = inputs.iter().map(|v| v.as_slice()).collect();
        let got = p.project_batch(&rows).unwrap();
        for (x, out) in inputs.iter().zip(&got) {
            let mut want = vec![0f32; 80];
            for (c, &xc) in x.iter().enumerate() {
                for (r, w) in want.iter_mut().enumerate() {
                    *w += xc * p.entry(r, c);
                }
            }
            assert_eq!(out, &want);
        }
    }

    #[test]
    fn dispatch_matches_portable() {
        let column: Vec<f32> = (0..1037).map(|i| (i as f32 * 0.37).sin()).collect();
        let mut a: Vec<f32> = (0..1037).map(|i| (i as f32 * 0.11).cos()).collect();
        let mut b = a.clone();
        axpy(&mut a, &column, 0.731);
        axpy_portable(&mut b, &column, 0.731);
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_entries_have_variance_one_over_k() {
        let k = 16;
        let p = Projector::new(ProjectionSpec::new(3, 4096, k, Distribution::Gaussian)).unwrap();
        let n = (k * 4096) as f64;
        let (mut sum, mut sq) = (0f64, 0f64);
        for r in 0..k {
            for c in 0..4096 {
                let e = p.entry(r, c) as f64;
                sum += e;
                sq += e * e;
            }
        }
        let mean = sum / n;
        let var = sq / n - mean * mean;
        assert!(mean.abs() < 0.01 / (k as f64).sqrt());
        assert!((var * k as f64 - 1.0).abs() < 0.03, "var*k = {}", var * k as f64);
    }
}
