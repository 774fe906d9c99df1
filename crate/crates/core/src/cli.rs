//! Command-line front end. Exit codes: 0 ok, 2 usage or data error, 3 I/O error.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::datastore::{
    estimate_size, CheckpointEntry, CheckpointManifest, Store, StoreKind, StoreWriter, StoredVector, ValStores,
};
use crate::error::{Error, IoContext, Result};
use crate::influence::{score_manifests, DegeneratePolicy, ScoreMode, ScoreOptions, ScoreTable, ValAggregation};
use crate::projector::{check_finite, Distribution, ProjectionSpec, Projector, RawGradientRecord};
use crate::quantizer::{quantize_with, Method, QuantScheme, QuantizedVector, SignScale};
use crate::selector::{select_from_table, SelectionConfig, TaskReduction};
use crate::synth::{fidelity_sweep_seeds, gen_synthetic, Encoding, SynthConfig, SynthCorpus};

/// Vectors read and projected per batch.
const BATCH: usize = 1024;

#[derive(Debug, Parser)]
#[command(name = "qgrad", version, about = "Quantized gradient datastore and influence-based data selection")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "QGRAD_THREADS")]
    pub threads: Option<usize>,
    /// Seed for the projection matrix and synthetic data.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Project raw gradients into a float32 store.
    Project(ProjectArgs),
    /// Quantize a float32 store, or every store of a manifest.
    Quantize(QuantizeArgs),
    /// Compute influence scores for two manifests.
    Score(ScoreArgs),
    /// Select the top fraction of samples from a score file.
    Select(SelectArgs),
    /// Zero-bin fraction and code histogram of a store.
    Analyze(AnalyzeArgs),
    /// Storage needed for a quantized datastore.
    EstimateSize(EstimateArgs),
    /// Fidelity sweep on synthetic data, or emit a synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// JSON Lines records (`.jsonl`/`.json`), or raw little-endian f32 with a
    /// `<input>.json` sidecar.
    #[arg(long)]
    pub input: PathBuf,
    /// Output store.
    #[arg(long)]
    pub out: PathBuf,
    /// Projected dimension.
    #[arg(long = "dim-out")]
    pub dim_out: usize,
    /// Expected input dimension; taken from the first record if omitted.
    #[arg(long = "dim-in")]
    pub dim_in: Option<usize>,
    #[arg(long, default_value = "rademacher")]
    pub dist: Distribution,
    /// Checkpoint id; defaults to the one recorded in the input.
    #[arg(long)]
    pub checkpoint_id: Option<String>,
    /// Add the output store to this manifest, creating it if needed.
    #[arg(long, requires = "eta")]
    pub manifest_out: Option<PathBuf>,
    /// Learning rate of the checkpoint, for `--manifest-out`.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Validation task name; without it the store is recorded as training data.
    #[arg(long)]
    pub task: Option<String>,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest", requires = "out")]
    pub input_store: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Quantize every store listed in this manifest.
    #[arg(long, requires = "manifest_out")]
    pub manifest: Option<PathBuf>,
    /// Manifest for the quantized stores, written next to them.
    #[arg(long)]
    pub manifest_out: Option<PathBuf>,
    /// absmax, absmean or sign.
    #[arg(long)]
    pub scheme: Method,
    #[arg(long)]
    pub bits: u8,
    /// Scale stored with sign codes: mean or max.
    #[arg(long, default_value = "mean", value_parser = parse_sign_scale)]
    pub sign_scale: SignScale,
    /// Also quantize validation stores listed in `--manifest`.
    #[arg(long)]
    pub include_val: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub train_manifest: PathBuf,
    #[arg(long)]
    pub val_manifest: PathBuf,
    /// qless, less_fp or tracin.
    #[arg(long, default_value = "qless")]
    pub mode: ScoreMode,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the binary score cache here.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Per-task reduction over validation samples: mean or sum.
    #[arg(long, default_value = "mean")]
    pub val_aggregation: ValAggregation,
    /// Fail on all-zero vectors instead of skipping their terms.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Score CSV or binary cache.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub fraction: f64,
    /// Output JSON Lines, one selected sample per line. A `<out>.meta.json`
    /// sidecar is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the selected ids, one per line.
    #[arg(long)]
    pub ids_out: Option<PathBuf>,
    /// Reduction across tasks: max or mean.
    #[arg(long, default_value = "max")]
    pub task_reduction: TaskReduction,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// For float32 stores: quantize with this scheme before analyzing.
    #[arg(long, requires = "bits")]
    pub scheme: Option<Method>,
    #[arg(long)]
    pub bits: Option<u8>,
    /// Write the analysis as JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Number of training samples.
    #[arg(long)]
    pub n: u64,
    #[arg(long)]
    pub k: u64,
    #[arg(long)]
    pub bits: u32,
    #[arg(long, default_value_t = 1)]
    pub checkpoints: u64,
    /// Leave out the per-vector scale factors.
    #[arg(long)]
    pub no_scales: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 4096)]
    pub d: usize,
    #[arg(long, default_value_t = 1024)]
    pub k: usize,
    #[arg(long, default_value_t = 20_000)]
    pub n_train: usize,
    #[arg(long, default_value_t = 50)]
    pub n_val: usize,
    #[arg(long, default_value_t = 3)]
    pub n_tasks: usize,
    #[arg(long, default_value_t = 4)]
    pub n_checkpoints: usize,
    #[arg(long, default_value_t = 1000)]
    pub cluster_count: usize,
    #[arg(long, default_value_t = 0.1)]
    pub cluster_strength: f64,
    #[arg(long, default_value_t = 0.5)]
    pub noise_sigma: f64,
    /// Comma-separated seeds for the sweep; defaults to `--seed`.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 0.05)]
    pub fraction: f64,
    #[arg(long)]
    pub report_json: Option<PathBuf>,
    #[arg(long)]
    pub report_csv: Option<PathBuf>,
    /// Write the corpus of `--seed` as raw f32 files with sidecars instead of
    /// running the sweep.
    #[arg(long)]
    pub emit_dir: Option<PathBuf>,
}

fn parse_sign_scale(s: &str) -> std::result::Result<SignScale, String> {
    match s.to_ascii_lowercase().as_str() {
        "mean" => Ok(SignScale::Mean),
        "max" => Ok(SignScale::Max),
        other => Err(format!("unknown sign scale {other:?} (expected mean or max)")),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let _ = env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .try_init();
    eprintln!(
        "qgrad {} seed={} config={}",
        env!("CARGO_PKG_VERSION"),
        cli.seed,
        config_hash(&cli)
    );
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Hash of the parsed command line, excluding the thread count (which never
/// changes results).
fn config_hash(cli: &Cli) -> String {
    let text = format!("{:?} {:?}", cli.seed, cli.command);
    crate::datastore::hex_digest(text.as_bytes())[..16].to_string()
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Argument("--threads must be at least 1".into()));
        }
        // Fails only if a global pool already exists, e.g. in tests.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Project(a) => project(a, cli.seed),
        Command::Quantize(a) => quantize_cmd(a),
        Command::Score(a) => score(a),
        Command::Select(a) => select(a),
        Command::Analyze(a) => analyze(a),
        Command::EstimateSize(a) => estimate(a),
        Command::Synth(a) => synth(a, cli.seed),
    }
}

/// Sidecar describing a raw f32 gradient file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub d: usize,
    pub count: usize,
    pub sample_ids: Vec<String>,
    #[serde(default)]
    pub checkpoint_id: String,
}

pub fn sidecar_path(input: &Path) -> PathBuf {
    let mut s = input.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `records` as a raw f32 file plus sidecar.
pub fn write_raw(path: &Path, records: &[RawGradientRecord]) -> Result<()> {
    let d = records.first().map_or(0, |r| r.values.len());
    let mut w = BufWriter::new(File::create(path).at(path)?);
    for r in records {
        if r.values.len() != d {
            return Err(Error::Dimension {
                context: format!("record {:?}", r.sample_id),
                expected: d,
                actual: r.values.len(),
            });
        }
        for v in &r.values {
            w.write_all(&v.to_le_bytes()).at(path)?;
        }
    }
    w.flush().at(path)?;
    let side = RawSidecar {
        d,
        count: records.len(),
        sample_ids: records.iter().map(|r| r.sample_id.clone()).collect(),
        checkpoint_id: records.first().map(|r| r.checkpoint_id.clone()).unwrap_or_default(),
    };
    let sp = sidecar_path(path);
    std::fs::write(&sp, serde_json::to_string(&side).expect("sidecar serializes")).at(&sp)
}

enum RecordSource {
    Jsonl {
        path: PathBuf,
        lines: std::io::Lines<BufReader<File>>,
        line: usize,
    },
    Raw {
        path: PathBuf,
        reader: BufReader<File>,
        side: RawSidecar,
        next: usize,
    },
}

impl RecordSource {
    fn open(path: &Path) -> Result<Self> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        let file = File::open(path).at(path)?;
        if ext == "jsonl" || ext == "json" {
            return Ok(Self::Jsonl {
                path: path.to_path_buf(),
                lines: BufReader::new(file).lines(),
                line: 0,
            });
        }
        let sp = sidecar_path(path);
        let text = std::fs::read_to_string(&sp).at(&sp)?;
        let side: RawSidecar = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: sp.clone(),
            message: e.to_string(),
        })?;
        if side.sample_ids.len() != side.count {
            return Err(Error::Format {
                path: sp,
                message: format!("count={} but {} sample ids", side.count, side.sample_ids.len()),
            });
        }
        let expected = (side.count * side.d * 4) as u64;
        let actual = file.metadata().at(path)?.len();
        if actual != expected {
            return Err(Error::Data(format!(
                "{}: expected {expected} bytes for {} x {} f32 values, found {actual}",
                path.display(),
                side.count,
                side.d
            )));
        }
        Ok(Self::Raw {
            path: path.to_path_buf(),
            reader: BufReader::with_capacity(1 << 20, file),
            side,
            next: 0,
        })
    }

    fn next_record(&mut self) -> Result<Option<RawGradientRecord>> {
        match self {
            Self::Jsonl { path, lines, line } => loop {
                let Some(text) = lines.next() else { return Ok(None) };
                let text = text.at(path)?;
                *line += 1;
                if text.trim().is_empty() {
                    continue;
                }
                let rec: RawGradientRecord = serde_json::from_str(&text).map_err(|e| Error::Format {
                    path: path.clone(),
                    message: format!("line {line}: {e}"),
                })?;
                return Ok(Some(rec));
            },
            Self::Raw {
                path,
                reader,
                side,
                next,
            } => {
                if *next == side.count {
                    return Ok(None);
                }
                let mut buf = vec![0u8; side.d * 4];
                reader.read_exact(&mut buf).at(path)?;
                let values = buf
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                let rec = RawGradientRecord {
                    sample_id: side.sample_ids[*next].clone(),
                    checkpoint_id: side.checkpoint_id.clone(),
                    values,
                };
                *next += 1;
                Ok(Some(rec))
            }
        }
    }
}

fn project(a: &ProjectArgs, seed: u64) -> Result<()> {
    let mut source = RecordSource::open(&a.input)?;
    let mut first = source.next_record()?;
    let Some(first_rec) = first.as_ref() else {
        log::warn!("{} holds no records; writing an empty store", a.input.display());
        let ckpt = a.checkpoint_id.clone().unwrap_or_default();
        StoreWriter::create(&a.out, StoreKind::Float32, a.dim_out, ckpt.clone())?.finish()?;
        return record_in_manifest(a, &ckpt);
    };
    let d = a.dim_in.unwrap_or(first_rec.values.len());
    let ckpt = a
        .checkpoint_id
        .clone()
        .unwrap_or_else(|| first_rec.checkpoint_id.clone());
    let projector = Projector::new(ProjectionSpec::new(seed, d, a.dim_out, a.dist))?;
    let mut writer = StoreWriter::create(&a.out, StoreKind::Float32, a.dim_out, ckpt.clone())?;
    let mut batch: Vec<RawGradientRecord> = Vec::with_capacity(BATCH);
    loop {
        let rec = match first.take() {
            Some(r) => Some(r),
            None => source.next_record()?,
        };
        let done = rec.is_none();
        if let Some(rec) = rec {
            if rec.values.len() != d {
                return Err(Error::Dimension {
                    context: format!("input record {:?}", rec.sample_id),
                    expected: d,
                    actual: rec.values.len(),
                });
            }
            check_finite(&rec.values, &format!("input record {:?}", rec.sample_id))?;
            batch.push(rec);
        }
        if batch.len() == BATCH || (done && !batch.is_empty()) {
            let rows: Vec<&[f32]> = batch.iter().map(|r| r.values.as_slice()).collect();
            for (rec, out) in batch.iter().zip(projector.project_batch(&rows)?) {
                writer.push_float(&rec.sample_id, &out)?;
            }
            batch.clear();
        }
        if done {
            break;
        }
    }
    let summary = writer.finish()?;
    log::info!("wrote {} vectors ({} bytes) to {}", summary.count, summary.bytes, a.out.display());
    record_in_manifest(a, &ckpt)
}

/// Manifest as stored on disk, with paths left unresolved.
fn read_raw_manifest(path: &Path) -> Result<CheckpointManifest> {
    if !path.exists() {
        return Ok(CheckpointManifest { checkpoints: Vec::new() });
    }
    let text = std::fs::read_to_string(path).at(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// `store` as written into a manifest at `manifest`: a bare file name when
/// both share a directory, otherwise an absolute path.
fn manifest_relative(manifest: &Path, store: &Path) -> Result<PathBuf> {
    let dir = |p: &Path| -> Result<PathBuf> {
        let parent = match p.parent() {
            Some(x) if !x.as_os_str().is_empty() => x.to_path_buf(),
            _ => PathBuf::from("."),
        };
        parent.canonicalize().at(&parent)
    };
    let name = store
        .file_name()
        .ok_or_else(|| Error::Argument(format!("{} is not a file path", store.display())))?;
    let store_dir = dir(store)?;
    if dir(manifest)? == store_dir {
        Ok(PathBuf::from(name))
    } else {
        Ok(store_dir.join(name))
    }
}

fn record_in_manifest(a: &ProjectArgs, ckpt: &str) -> Result<()> {
    let (Some(mpath), Some(eta)) = (&a.manifest_out, a.eta) else {
        return Ok(());
    };
    let mut m = read_raw_manifest(mpath)?;
    let rel = manifest_relative(mpath, &a.out)?;
    let entry = match m.checkpoints.iter().position(|c| c.id == ckpt) {
        Some(i) => {
            if m.checkpoints[i].eta != eta {
                return Err(Error::Config(format!(
                    "checkpoint {ckpt:?} already has eta={} in {}, got {eta}",
                    m.checkpoints[i].eta,
                    mpath.display()
                )));
            }
            &mut m.checkpoints[i]
        }
        None => {
            m.checkpoints.push(CheckpointEntry {
                id: ckpt.to_string(),
                eta,
                train_store: None,
                val_store: None,
            });
            m.checkpoints.last_mut().unwrap()
        }
    };
    match &a.task {
        None => entry.train_store = Some(rel),
        Some(task) => {
            let mut tasks = match entry.val_store.take() {
                Some(ValStores::Tasks(t)) => t,
                Some(ValStores::Single(p)) => BTreeMap::from([(crate::datastore::DEFAULT_TASK.to_string(), p)]),
                None => BTreeMap::new(),
            };
            tasks.insert(task.clone(), rel);
            entry.val_store = Some(ValStores::Tasks(tasks));
        }
    }
    m.save(mpath)
}

fn quantize_store(input: &Path, out: &Path, scheme: QuantScheme, sign_scale: SignScale) -> Result<()> {
    let store = Store::open(input)?;
    if let StoreKind::Quantized { scheme: s } = store.kind() {
        return Err(Error::Scheme(format!(
            "{} is already quantized ({s}); quantize the float32 store instead",
            input.display()
        )));
    }
    let mut writer = StoreWriter::create(out, StoreKind::Quantized { scheme }, store.k(), store.checkpoint_id())?;
    for item in store.iter() {
        let StoredVector::Float { sample_id, values, .. } = item? else {
            unreachable!("float32 store yields float vectors")
        };
        let qv = quantize_with(&values, scheme, sign_scale)?.with_ids(sample_id, store.checkpoint_id());
        writer.push_quantized(&qv)?;
    }
    let summary = writer.finish()?;
    log::info!("wrote {} codes ({} bytes) to {}", summary.count, summary.bytes, out.display());
    Ok(())
}

fn quantize_cmd(a: &QuantizeArgs) -> Result<()> {
    let scheme = QuantScheme::new(a.scheme, a.bits)?;
    if let (Some(input), Some(out)) = (&a.input_store, &a.out) {
        return quantize_store(input, out, scheme, a.sign_scale);
    }
    let (Some(mpath), Some(out_m)) = (&a.manifest, &a.manifest_out) else {
        return Err(Error::Argument("give --input-store/--out or --manifest/--manifest-out".into()));
    };
    let m = CheckpointManifest::load(mpath)?;
    let out_dir = match out_m.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let tag = format!("{}{}", a.scheme, a.bits);
    let target = |src: &Path| -> PathBuf {
        let stem = src.file_stem().and_then(|s| s.to_str()).unwrap_or("store");
        out_dir.join(format!("{stem}.{tag}.qgs"))
    };
    let mut out = CheckpointManifest { checkpoints: Vec::new() };
    for c in &m.checkpoints {
        let mut entry = CheckpointEntry {
            id: c.id.clone(),
            eta: c.eta,
            train_store: None,
            val_store: c.val_store.clone(),
        };
        if let Some(src) = &c.train_store {
            let dst = target(src);
            quantize_store(src, &dst, scheme, a.sign_scale)?;
            entry.train_store = Some(PathBuf::from(dst.file_name().unwrap()));
        }
        if let Some(vs) = &c.val_store {
            let mut tasks = BTreeMap::new();
            for (t, src) in vs.tasks() {
                let path = if a.include_val {
                    let dst = target(&src);
                    quantize_store(&src, &dst, scheme, a.sign_scale)?;
                    PathBuf::from(dst.file_name().unwrap())
                } else {
                    src.canonicalize().at(&src)?
                };
                tasks.insert(t, path);
            }
            entry.val_store = Some(match vs {
                ValStores::Single(_) => ValStores::Single(tasks.into_values().next().unwrap()),
                ValStores::Tasks(_) => ValStores::Tasks(tasks),
            });
        }
        out.checkpoints.push(entry);
    }
    out.save(out_m)
}

fn score(a: &ScoreArgs) -> Result<()> {
    let options = ScoreOptions {
        mode: a.mode,
        degenerate: if a.strict {
            DegeneratePolicy::Error
        } else {
            DegeneratePolicy::Skip
        },
        aggregation: a.val_aggregation,
    };
    let table = score_manifests(&a.train_manifest, &a.val_manifest, options)?;
    table.write_csv(&a.out)?;
    if let Some(cache) = &a.cache {
        table.write_cache(cache)?;
    }
    log::info!("wrote {} x {} scores to {}", table.rows(), table.cols(), a.out.display());
    Ok(())
}

fn select(a: &SelectArgs) -> Result<()> {
    let config = SelectionConfig {
        fraction: a.fraction,
        task_reduction: a.task_reduction,
        ..SelectionConfig::default()
    };
    config.validate()?;
    let table = ScoreTable::load(&a.scores)?;
    let result = select_from_table(&table, &config)?;
    result.write_jsonl(&a.out)?;
    let mut side = a.out.as_os_str().to_owned();
    side.push(".meta.json");
    result.write_sidecar(PathBuf::from(side))?;
    if let Some(ids) = &a.ids_out {
        result.write_ids(ids)?;
    }
    log::info!("selected {} of {} samples", result.selected_count, result.universe_size);
    Ok(())
}

#[derive(Debug, Serialize)]
struct Analysis {
    store: String,
    scheme: String,
    vectors: usize,
    k: usize,
    zero_bin_fraction: Option<f64>,
    degenerate: usize,
    /// Code value to count, over all vectors.
    histogram: BTreeMap<i32, u64>,
}

fn analyze(a: &AnalyzeArgs) -> Result<()> {
    let store = Store::open(&a.store)?;
    let requested = match (a.scheme, a.bits) {
        (Some(m), Some(b)) => Some(QuantScheme::new(m, b)?),
        _ => None,
    };
    let scheme = match (store.kind(), requested) {
        (StoreKind::Quantized { scheme }, None) => scheme,
        (StoreKind::Quantized { scheme }, Some(r)) if r == scheme => scheme,
        (StoreKind::Quantized { scheme }, Some(r)) => {
            return Err(Error::Scheme(format!(
                "{} holds {scheme} codes; cannot analyze as {r}",
                a.store.display()
            )))
        }
        (StoreKind::Float32, Some(r)) => r,
        (StoreKind::Float32, None) => {
            return Err(Error::Argument(
                "float32 store: give --scheme and --bits to analyze its quantized codes".into(),
            ))
        }
    };
    let mut histogram: BTreeMap<i32, u64> = BTreeMap::new();
    let mut degenerate = 0;
    for item in store.iter() {
        let qv: QuantizedVector = match item? {
            StoredVector::Quantized(qv) => qv,
            StoredVector::Float { values, .. } => crate::quantizer::quantize(&values, scheme)?,
        };
        degenerate += qv.degenerate as usize;
        for &c in &qv.codes {
            *histogram.entry(c as i32).or_default() += 1;
        }
    }
    let total: u64 = histogram.values().sum();
    let analysis = Analysis {
        store: a.store.display().to_string(),
        scheme: scheme.to_string(),
        vectors: store.len(),
        k: store.k(),
        zero_bin_fraction: (scheme.has_zero_bin() && total > 0)
            .then(|| histogram.get(&0).copied().unwrap_or(0) as f64 / total as f64),
        degenerate,
        histogram,
    };
    let text = serde_json::to_string_pretty(&analysis).expect("analysis serializes") + "\n";
    match &a.out {
        Some(p) => std::fs::write(p, text).at(p),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn estimate(a: &EstimateArgs) -> Result<()> {
    let bytes = estimate_size(a.n, a.k, a.bits, a.checkpoints, !a.no_scales)?;
    println!("{bytes} bytes ({:.2} GiB)", bytes as f64 / (1u64 << 30) as f64);
    Ok(())
}

fn synth(a: &SynthArgs, seed: u64) -> Result<()> {
    let config = SynthConfig {
        seed,
        d: a.d,
        k: a.k,
        n_train: a.n_train,
        n_val: a.n_val,
        n_tasks: a.n_tasks,
        n_checkpoints: a.n_checkpoints,
        cluster_count: a.cluster_count,
        cluster_strength: a.cluster_strength,
        noise_sigma: a.noise_sigma,
    };
    config.validate()?;
    if let Some(dir) = &a.emit_dir {
        return emit_corpus(&gen_synthetic(&config)?, dir);
    }
    let seeds = if a.seeds.is_empty() { vec![seed] } else { a.seeds.clone() };
    let report = fidelity_sweep_seeds(&config, &seeds, &Encoding::standard(), a.fraction)?;
    if let Some(p) = &a.report_json {
        report.write_json(p)?;
    }
    if let Some(p) = &a.report_csv {
        report.write_csv(p)?;
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
    let io = |e| Error::io("<stdout>", e);
    writeln!(out, "seed\tencoding\trho_less_fp\trho_oracle\toverlap_less_fp\toverlap_oracle\tzero_bin\trecovery").map_err(io)?;
    for r in &report.rows {
        writeln!(
            out,
            "{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}\t{:.4}",
            r.seed,
            r.encoding,
            r.spearman_vs_less_fp,
            r.spearman_vs_oracle,
            r.overlap_vs_less_fp,
            r.overlap_vs_oracle,
            fmt(r.zero_bin_fraction),
            r.planted_recovery
        )
        .map_err(io)?;
    }
    Ok(())
}

/// Writes `train-ckpt<i>.f32` and `val-<task>-ckpt<i>.f32` (with sidecars)
/// and `corpus.json` listing checkpoints, learning rates and planted ids.
fn emit_corpus(corpus: &SynthCorpus, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).at(dir)?;
    let manifest = corpus.manifest();
    for (i, entry) in manifest.checkpoints.iter().enumerate() {
        write_raw(&dir.join(format!("train-ckpt{i}.f32")), &corpus.train_records(i))?;
        let val = corpus.val_records(i);
        for (task, members) in corpus.val_groups() {
            let recs: Vec<RawGradientRecord> = members.iter().map(|&j| val[j].clone()).collect();
            write_raw(&dir.join(format!("val-{task}-ckpt{i}.f32")), &recs)?;
        }
        log::info!("emitted checkpoint {}", entry.id);
    }
    #[derive(Serialize)]
    struct CorpusInfo<'a> {
        config: &'a SynthConfig,
        checkpoints: Vec<(String, f64)>,
        tasks: &'a [String],
        planted: Vec<&'a str>,
    }
    let mut planted: Vec<&str> = corpus.planted_ids().into_iter().collect();
    planted.sort_unstable();
    let info = CorpusInfo {
        config: corpus.config(),
        checkpoints: manifest.checkpoints.iter().map(|c| (c.id.clone(), c.eta)).collect(),
        tasks: corpus.tasks(),
        planted,
    };
    let p = dir.join("corpus.json");
    std::fs::write(&p, serde_json::to_string_pretty(&info).expect("corpus info serializes")).at(&p)
}
